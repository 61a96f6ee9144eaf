#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "shardsearch/encoder.hpp"
#include "shardsearch/evalkit.hpp"
#include "shardsearch/lexical_index.hpp"
#include "shardsearch/rerank.hpp"
#include "shardsearch/traingen.hpp"

namespace shardsearch::cli {

inline constexpr const char* kEnvPrefix = "SHARDSEARCH_";

/// Every tunable of the command-line tool. Values come from, in increasing
/// precedence: defaults, the config file, SHARDSEARCH_* environment
/// variables, command-line flags.
struct AppConfig {
  // [corpus]
  std::vector<std::string> corpus_paths;
  std::optional<std::int64_t> num_segments;  // default: highest segment seen + 1
  std::int64_t num_partitions = 4;

  // [index]
  std::string lexical_dir = "indexes/lexical";
  std::string dense_dir = "indexes/dense";

  // [federation]
  std::vector<std::string> shards;
  std::string aggregator;
  std::int64_t timeout_ms = 30000;
  std::size_t default_k = 10;
  std::string stats = "per-shard";

  // [bm25]
  Bm25Params bm25;

  // [rerank]
  RerankConfig rerank;
  std::size_t scorer_batch_size = 32;
  std::string scorer_url;

  // [sampling]
  SamplingConfig sampling;

  // [eval]
  MetricCutoffs cutoffs;

  // [dense]
  EmbeddingSpec embedding;
  std::string encoder = "hash";
  std::string embed_url;

  /// Throws Error{invalid_config} naming the offending field.
  void validate() const;
};

/// Reads a `.toml` or `.json` config file. Unknown keys are rejected.
/// Throws Error{invalid_config | io_error}.
AppConfig load_app_config(const std::filesystem::path& path, AppConfig base = {});

}  // namespace shardsearch::cli
