#include "shardsearch/service.hpp"

#include <charconv>
#include <nlohmann/json.hpp>

#include "http_util.hpp"
#include "shardsearch/error.hpp"

namespace shardsearch {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

json hit_json(const ScoredDoc& d, bool with_shard) {
  json j = {{"docid", d.doc_id}, {"score", d.score}, {"url", d.url.value_or("")}, {"title", d.title.value_or("")}};
  if (d.body) j["body"] = *d.body;
  if (with_shard) j["shard"] = d.shard;
  if (d.first_stage_score) j["first_stage_score"] = *d.first_stage_score;
  return j;
}

json stored_json(const StoredFields& s) {
  return {{"docid", s.id}, {"segment", s.segment}, {"url", s.url}, {"title", s.title}, {"body", s.body}};
}

std::string param(const httplib::Request& req, const char* name, const std::string& fallback = {}) {
  return req.has_param(name) ? req.get_param_value(name) : fallback;
}

std::size_t size_param(const httplib::Request& req, const char* name, std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  const std::string v = req.get_param_value(name);
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw Error(Errc::invalid_args, std::string("parameter '") + name + "' must be a non-negative integer");
  }
  return out;
}

std::uint64_t u64_param(const httplib::Request& req, const char* name) {
  return static_cast<std::uint64_t>(size_param(req, name, 0));
}

int status_for(const Error& e) {
  switch (e.code()) {
    case Errc::invalid_args:
    case Errc::malformed_json:
      return 400;
    case Errc::not_found:
      return 404;
    case Errc::all_shards_failed:
    case Errc::scorer_failure:
    case Errc::upstream:
    case Errc::timeout:
      return 502;
    default:
      return 500;
  }
}

// Wraps a handler so domain errors become JSON error responses.
template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      res.status = status_for(e);
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    }
  };
}

void reply(httplib::Response& res, const json& body) { res.set_content(body.dump(), "application/json"); }

}  // namespace

// ---------------------------------------------------------------------------

HttpService::HttpService() : server_(std::make_unique<httplib::Server>()) {}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound < 0) throw Error(Errc::io_error, "cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) throw Error(Errc::io_error, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpService::run() { server_->listen_after_bind(); }

void HttpService::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

void HttpService::wait_until_ready() const { server_->wait_until_ready(); }

// ---------------------------------------------------------------------------

ShardService::ShardService(std::shared_ptr<LocalShard> shard) : shard_(std::move(shard)) {
  auto& srv = server();

  srv.Get("/health", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });

  srv.Get("/search", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto t0 = Clock::now();
            if (!req.has_param("q")) throw Error(Errc::invalid_args, "missing parameter 'q'");
            ShardQuery q;
            q.text = req.get_param_value("q");
            q.k = size_param(req, "k", 10);
            q.mode = parse_search_mode(param(req, "mode", "lexical"));
            q.field = parse_field(param(req, "field", "body"));
            q.include_body = param(req, "include_body", "0") == "1";
            if (req.has_param("global_n")) {
              CollectionStats cs;
              cs.doc_count = u64_param(req, "global_n");
              cs.total_tokens = u64_param(req, "global_tokens");
              const auto df = json::parse(param(req, "global_df", "{}"), nullptr, false);
              if (df.is_discarded() || !df.is_object()) throw Error(Errc::invalid_args, "global_df must be a JSON object");
              for (const auto& [term, v] : df.items()) {
                if (!v.is_number_unsigned()) throw Error(Errc::invalid_args, "global_df values must be counts");
                cs.doc_freqs[term] = v.get<std::uint64_t>();
              }
              q.global_stats = std::move(cs);
            }
            const RankedList hits = shard_->search(q);
            json results = json::array();
            for (const auto& h : hits.entries) results.push_back(hit_json(h, false));
            const double took = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
            reply(res, {{"results", results}, {"took_ms", took}});
          }));

  srv.Get(R"(/doc/(.+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            auto stored = shard_->fetch(id);
            if (!stored) throw Error(Errc::not_found, id);
            reply(res, stored_json(*stored));
          }));

  srv.Get("/stats", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const Field field = parse_field(param(req, "field", "body"));
            const FieldStats fs = shard_->field_stats(field);
            json body;
            body["mode_stats"] = {{"N", fs.doc_count},
                                  {"avgdl", fs.avgdl()},
                                  {"total_tokens", fs.total_tokens},
                                  {"field", std::string(to_string(field))},
                                  {"df_available", shard_->lexical() != nullptr}};
            if (const auto* dense = shard_->dense()) {
              body["dense"] = {{"count", dense->size()}, {"dim", dense->dim()}};
            }
            if (req.has_param("terms")) {
              const auto terms = json::parse(req.get_param_value("terms"), nullptr, false);
              if (terms.is_discarded() || !terms.is_array()) throw Error(Errc::invalid_args, "terms must be a JSON array");
              std::vector<std::string> list;
              for (const auto& t : terms) {
                if (!t.is_string()) throw Error(Errc::invalid_args, "terms must be strings");
                list.push_back(t.get<std::string>());
              }
              json df = json::object();
              for (const auto& [term, n] : shard_->doc_freqs(list, field)) df[term] = n;
              body["df"] = df;
            }
            reply(res, body);
          }));
}

// ---------------------------------------------------------------------------

AggregatorService::AggregatorService(std::shared_ptr<Federation> federation, AggregatorOptions options)
    : federation_(std::move(federation)), options_(std::move(options)) {
  options_.rerank.validate();
  auto& srv = server();

  srv.Get("/health", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });

  srv.Get("/search", guarded([this](const httplib::Request& req, httplib::Response& res) {
            if (!req.has_param("q")) throw Error(Errc::invalid_args, "missing parameter 'q'");
            FederatedQuery q;
            q.text = req.get_param_value("q");
            q.k = size_param(req, "k", options_.default_k);
            q.mode = parse_search_mode(param(req, "mode", "lexical"));
            q.stats = req.has_param("stats") ? parse_stats_mode(req.get_param_value("stats")) : options_.default_stats;
            q.field = parse_field(param(req, "field", "body"));
            const FederatedResult r = federation_->search(q);

            json results = json::array();
            for (const auto& h : r.list.entries) results.push_back(hit_json(h, true));
            json shards = json::array();
            for (const auto& s : r.shards) {
              json sj = {{"shard", s.shard}, {"endpoint", s.name}, {"ok", s.ok}, {"took_ms", s.took.count()}, {"hits", s.hits}};
              if (!s.ok) sj["error"] = s.error;
              shards.push_back(std::move(sj));
            }
            reply(res, {{"query", q.text},
                        {"mode", std::string(to_string(q.mode))},
                        {"stats", std::string(to_string(q.stats))},
                        {"results", results},
                        {"degraded", r.degraded},
                        {"failed_shards", r.failed_shards()},
                        {"shards", shards},
                        {"took_ms", r.took.count()}});
          }));

  srv.Get("/rerank", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto t0 = Clock::now();
            if (!req.has_param("q")) throw Error(Errc::invalid_args, "missing parameter 'q'");
            const std::string query = req.get_param_value("q");
            RerankConfig cfg = options_.rerank;
            cfg.first_stage_depth = size_param(req, "depth", cfg.first_stage_depth);
            cfg.output_size = size_param(req, "out", cfg.output_size);
            cfg.validate();
            const std::string scorer_name = param(req, "scorer", "builtin");
            const SearchMode mode = parse_search_mode(param(req, "mode", "lexical"));
            const StatsMode stats =
                req.has_param("stats") ? parse_stats_mode(req.get_param_value("stats")) : options_.default_stats;

            RankedList out;
            if (scorer_name == "builtin") {
              OverlapScorer scorer;
              out = rerank_query(*federation_, query, cfg, scorer, mode, stats);
            } else if (scorer_name == "remote") {
              if (options_.scorer_endpoint.empty()) throw Error(Errc::invalid_args, "no remote scorer configured");
              RemoteScorer scorer(options_.scorer_endpoint, options_.scorer_batch_size, options_.scorer_timeout);
              out = rerank_query(*federation_, query, cfg, scorer, mode, stats);
            } else {
              throw Error(Errc::invalid_args, "scorer must be builtin|remote");
            }
            json results = json::array();
            for (auto h : out.entries) {
              h.body.reset();
              results.push_back(hit_json(h, true));
            }
            const double took = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
            reply(res, {{"query", query},
                        {"scorer", scorer_name},
                        {"depth", cfg.first_stage_depth},
                        {"results", results},
                        {"took_ms", took}});
          }));

  srv.Get(R"(/doc/(.+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            auto stored = federation_->fetch(id);
            if (!stored) throw Error(Errc::not_found, id);
            reply(res, stored_json(*stored));
          }));

  srv.Get("/latency", [this](const httplib::Request&, httplib::Response& res) {
    const LatencyStats s = federation_->latency().stats();
    reply(res, {{"count", s.count}, {"p50_ms", s.p50.count()}, {"p95_ms", s.p95.count()}, {"max_ms", s.max.count()}});
  });
}

// ---------------------------------------------------------------------------

HttpShard::HttpShard(std::string base_url, std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

RankedList HttpShard::search(const ShardQuery& query) {
  httplib::Params params{{"q", query.text},
                         {"k", std::to_string(query.k)},
                         {"mode", std::string(to_string(query.mode))},
                         {"field", std::string(to_string(query.field))}};
  if (query.include_body) params.emplace("include_body", "1");
  if (query.global_stats) {
    params.emplace("global_n", std::to_string(query.global_stats->doc_count));
    params.emplace("global_tokens", std::to_string(query.global_stats->total_tokens));
    json df = json::object();
    for (const auto& [t, n] : query.global_stats->doc_freqs) df[t] = n;
    params.emplace("global_df", df.dump());
  }
  auto client = detail::make_client(base_url_, timeout_);
  auto res = client->Get("/search", params, httplib::Headers{});
  if (!res) detail::throw_transport("GET " + base_url_ + "/search", res.error());
  if (res->status != 200) throw UpstreamError(res->status, res->body);
  const json body = detail::parse_body("shard search", res->body);

  RankedList out;
  for (const auto& r : body.at("results")) {
    ScoredDoc d;
    d.doc_id = r.at("docid").get<std::string>();
    d.score = r.at("score").get<double>();
    d.url = r.value("url", std::string());
    d.title = r.value("title", std::string());
    if (r.contains("body")) d.body = r.at("body").get<std::string>();
    out.entries.push_back(std::move(d));
  }
  return out;
}

FieldStats HttpShard::field_stats(Field field) {
  auto client = detail::make_client(base_url_, timeout_);
  const json body = detail::get_json(*client, "/stats?field=" + std::string(to_string(field)));
  const auto& ms = body.at("mode_stats");
  return {field, ms.at("N").get<std::uint64_t>(), ms.at("total_tokens").get<std::uint64_t>()};
}

std::unordered_map<std::string, std::uint64_t> HttpShard::doc_freqs(std::span<const std::string> terms, Field field) {
  httplib::Params params{{"field", std::string(to_string(field))},
                         {"terms", json(std::vector<std::string>(terms.begin(), terms.end())).dump()}};
  auto client = detail::make_client(base_url_, timeout_);
  auto res = client->Get("/stats", params, httplib::Headers{});
  if (!res) detail::throw_transport("GET " + base_url_ + "/stats", res.error());
  if (res->status != 200) throw UpstreamError(res->status, res->body);
  const json body = detail::parse_body("shard stats", res->body);
  std::unordered_map<std::string, std::uint64_t> out;
  for (const auto& [t, n] : body.at("df").items()) out[t] = n.get<std::uint64_t>();
  return out;
}

std::optional<StoredFields> HttpShard::fetch(const std::string& doc_id) {
  auto client = detail::make_client(base_url_, timeout_);
  auto res = client->Get("/doc/" + httplib::detail::encode_url(doc_id));
  if (!res) detail::throw_transport("GET " + base_url_ + "/doc", res.error());
  if (res->status == 404) return std::nullopt;
  if (res->status != 200) throw UpstreamError(res->status, res->body);
  const json body = detail::parse_body("shard doc", res->body);
  StoredFields s;
  s.id = body.at("docid").get<std::string>();
  s.segment = body.value("segment", std::int64_t{0});
  s.url = body.at("url").get<std::string>();
  s.title = body.at("title").get<std::string>();
  s.body = body.at("body").get<std::string>();
  return s;
}

}  // namespace shardsearch
