#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "shardsearch/federation.hpp"
#include "shardsearch/rerank.hpp"

namespace httplib {
class Server;
}

namespace shardsearch {

/// Minimal lifecycle shared by the HTTP front ends.
class HttpService {
 public:
  HttpService();
  virtual ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds to `host:port`; port 0 picks a free port. Returns the bound port.
  /// Throws Error{io_error}.
  int bind(const std::string& host, int port);
  /// Serves until stop(); blocks the calling thread.
  void run();
  void stop();
  void wait_until_ready() const;

 protected:
  httplib::Server& server() { return *server_; }

 private:
  std::unique_ptr<httplib::Server> server_;
};

/// Serves one shard:
///   GET /search?q=&k=&mode=lexical|dense&field=body|title|url
///        [&include_body=1][&global_n=&global_tokens=&global_df={json}]
///   GET /doc/<docid>
///   GET /stats[?field=][&terms=[json array]]
///   GET /health
class ShardService final : public HttpService {
 public:
  explicit ShardService(std::shared_ptr<LocalShard> shard);

 private:
  std::shared_ptr<LocalShard> shard_;
};

struct AggregatorOptions {
  std::size_t default_k = 10;
  StatsMode default_stats = StatsMode::per_shard;
  RerankConfig rerank;
  std::string scorer_endpoint;  // empty: scorer=remote is rejected
  std::size_t scorer_batch_size = 32;
  std::chrono::milliseconds scorer_timeout = std::chrono::seconds(30);
};

/// Federating front end:
///   GET /search?q=&k=&mode=&stats=per-shard|global&field=
///   GET /rerank?q=&depth=&out=&scorer=builtin|remote&mode=&stats=
///   GET /doc/<docid>, GET /latency, GET /health
class AggregatorService final : public HttpService {
 public:
  AggregatorService(std::shared_ptr<Federation> federation, AggregatorOptions options);

 private:
  std::shared_ptr<Federation> federation_;
  AggregatorOptions options_;
};

}  // namespace shardsearch
