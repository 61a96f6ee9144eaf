#pragma once

#include <httplib.h>

#include <chrono>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>

#include "shardsearch/error.hpp"

namespace shardsearch::detail {

/// Client for a base URL such as "http://127.0.0.1:8080".
inline std::unique_ptr<httplib::Client> make_client(const std::string& base_url, std::chrono::milliseconds timeout) {
  auto client = std::make_unique<httplib::Client>(base_url);
  if (!client->is_valid()) throw Error(Errc::invalid_args, "bad endpoint URL '" + base_url + "'");
  client->set_connection_timeout(timeout);
  client->set_read_timeout(timeout);
  client->set_write_timeout(timeout);
  client->set_keep_alive(false);
  return client;
}

[[noreturn]] inline void throw_transport(const std::string& what, httplib::Error err) {
  if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
    throw Error(Errc::timeout, what + ": " + httplib::to_string(err));
  }
  throw UpstreamError(0, what + ": " + httplib::to_string(err));
}

inline nlohmann::json parse_body(const std::string& what, const std::string& body) {
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::malformed_json, what + ": response is not JSON");
  return j;
}

inline nlohmann::json get_json(httplib::Client& client, const std::string& path) {
  auto res = client.Get(path);
  if (!res) throw_transport("GET " + path, res.error());
  if (res->status != 200) throw UpstreamError(res->status, res->body);
  return parse_body("GET " + path, res->body);
}

inline nlohmann::json post_json(httplib::Client& client, const std::string& path, const nlohmann::json& body) {
  auto res = client.Post(path, body.dump(), "application/json");
  if (!res) throw_transport("POST " + path, res.error());
  if (res->status != 200) throw UpstreamError(res->status, res->body);
  return parse_body("POST " + path, res->body);
}

}  // namespace shardsearch::detail
