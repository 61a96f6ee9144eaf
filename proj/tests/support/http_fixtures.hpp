#pragma once

#include <httplib.h>

#include <functional>
#include <memory>
#include <string>
#include <thread>

#include "shardsearch/service.hpp"

namespace shardsearch::testing {

/// Runs an HttpService on an ephemeral loopback port for the lifetime of
/// the object.
template <typename Service>
class Running {
 public:
  template <typename... A>
  explicit Running(A&&... args) : service_(std::make_unique<Service>(std::forward<A>(args)...)) {
    port_ = service_->bind("127.0.0.1", 0);
    thread_ = std::thread([this] { service_->run(); });
    service_->wait_until_ready();
  }
  ~Running() {
    service_->stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int port() const { return port_; }

 private:
  std::unique_ptr<Service> service_;
  std::thread thread_;
  int port_ = 0;
};

/// Bare httplib server for faking remote model endpoints.
class MockServer {
 public:
  explicit MockServer(const std::function<void(httplib::Server&)>& routes) {
    routes(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace shardsearch::testing
