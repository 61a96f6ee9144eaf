#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "shardsearch/encoder.hpp"
#include "shardsearch/flat_index.hpp"
#include "shardsearch/lexical_index.hpp"
#include "shardsearch/ranked_list.hpp"

namespace shardsearch {

enum class SearchMode { lexical, dense };
enum class StatsMode { per_shard, global };

std::string_view to_string(SearchMode mode) noexcept;
std::string_view to_string(StatsMode mode) noexcept;
SearchMode parse_search_mode(std::string_view name);
StatsMode parse_stats_mode(std::string_view name);

/// Global top-k over several ranked lists (score descending, doc id
/// ascending). Result is independent of the order of `lists`.
///
/// Throws Error{duplicate_across_shards} when a doc id occurs in two lists.
RankedList merge_ranked_lists(std::span<const RankedList> lists, std::size_t k);

// ---------------------------------------------------------------------------
// Latency accounting

using Millis = std::chrono::duration<double, std::milli>;

/// Nearest-rank percentile: the ceil(p*n)-th smallest sample, p in (0, 1].
/// Throws Error{empty_samples}, or Error{invalid_args} for p outside (0, 1].
Millis latency_percentile(std::span<const Millis> samples, double p);

struct LatencyStats {
  std::size_t count = 0;
  Millis p50{};
  Millis p95{};
  Millis max{};

  static LatencyStats from_samples(std::span<const Millis> samples);
};

/// Sample sink shared by concurrent request handlers.
class LatencyRecorder {
 public:
  void add(Millis sample);
  std::vector<Millis> samples() const;
  LatencyStats stats() const;

 private:
  mutable std::mutex mutex_;
  std::vector<Millis> samples_;
};

// ---------------------------------------------------------------------------
// Shards

struct ShardQuery {
  std::string text;
  std::size_t k = 10;
  SearchMode mode = SearchMode::lexical;
  Field field = Field::body;
  bool include_body = false;
  std::optional<CollectionStats> global_stats;
};

/// One searchable partition, either in-process or behind HTTP.
/// Implementations must tolerate concurrent calls.
class ShardClient {
 public:
  virtual ~ShardClient() = default;

  virtual std::string name() const = 0;
  virtual RankedList search(const ShardQuery& query) = 0;
  virtual FieldStats field_stats(Field field) = 0;
  virtual std::unordered_map<std::string, std::uint64_t> doc_freqs(std::span<const std::string> terms, Field field) = 0;
  virtual std::optional<StoredFields> fetch(const std::string& doc_id) = 0;
};

/// Shard backed by in-memory indexes. Either index may be absent; queries
/// against a missing one throw Error{invalid_args}. Dense hits get url/title
/// attached when the lexical index holds the document.
class LocalShard final : public ShardClient {
 public:
  LocalShard(std::string name, std::shared_ptr<const LexicalIndex> lexical,
             std::shared_ptr<const FlatVectorIndex> dense = nullptr, std::shared_ptr<Encoder> encoder = nullptr);

  std::string name() const override { return name_; }
  RankedList search(const ShardQuery& query) override;
  FieldStats field_stats(Field field) override;
  std::unordered_map<std::string, std::uint64_t> doc_freqs(std::span<const std::string> terms, Field field) override;
  std::optional<StoredFields> fetch(const std::string& doc_id) override;

  const LexicalIndex* lexical() const noexcept { return lexical_.get(); }
  const FlatVectorIndex* dense() const noexcept { return dense_.get(); }

 private:
  std::string name_;
  std::shared_ptr<const LexicalIndex> lexical_;
  std::shared_ptr<const FlatVectorIndex> dense_;
  std::shared_ptr<Encoder> encoder_;
};

/// Client for a shard service's HTTP API.
class HttpShard final : public ShardClient {
 public:
  explicit HttpShard(std::string base_url, std::chrono::milliseconds timeout = std::chrono::seconds(30));

  std::string name() const override { return base_url_; }
  RankedList search(const ShardQuery& query) override;
  FieldStats field_stats(Field field) override;
  std::unordered_map<std::string, std::uint64_t> doc_freqs(std::span<const std::string> terms, Field field) override;
  std::optional<StoredFields> fetch(const std::string& doc_id) override;

 private:
  std::string base_url_;
  std::chrono::milliseconds timeout_;
};

// ---------------------------------------------------------------------------
// Federation

struct FederatedQuery {
  std::string text;
  std::size_t k = 10;
  SearchMode mode = SearchMode::lexical;
  StatsMode stats = StatsMode::per_shard;
  Field field = Field::body;
  bool include_body = false;
};

struct ShardOutcome {
  int shard = 0;
  std::string name;
  bool ok = false;
  std::string error;
  Millis took{};
  std::size_t hits = 0;
};

struct FederatedResult {
  RankedList list;
  bool degraded = false;  // at least one shard failed
  std::vector<ShardOutcome> shards;
  Millis took{};

  std::vector<int> failed_shards() const;
};

/// Fans a query out to every shard concurrently and merges the answers.
///
/// In per-shard stats mode every shard scores with its own statistics. In
/// global mode the federation first gathers corpus-wide N, token totals and
/// document frequencies and hands them to each shard, so the merged list
/// equals a search over one index holding every document.
///
/// Shards that fail are reported in `FederatedResult::shards` and the result
/// is flagged degraded; if all fail, Error{all_shards_failed} is thrown.
class Federation {
 public:
  explicit Federation(std::vector<std::shared_ptr<ShardClient>> shards);

  FederatedResult search(const FederatedQuery& query);

  /// Stored fields from whichever shard holds `doc_id`.
  std::optional<StoredFields> fetch(const std::string& doc_id);

  /// Collects N and token totals for every field from all shards and caches
  /// them for global-stats queries. Returns false if any shard failed.
  bool publish_global_stats();

  std::size_t shard_count() const noexcept { return shards_.size(); }
  const ShardClient& shard(std::size_t i) const { return *shards_[i]; }
  LatencyRecorder& latency() noexcept { return latency_; }

 private:
  std::optional<FieldStats> cached_totals(Field field);

  std::vector<std::shared_ptr<ShardClient>> shards_;
  std::mutex stats_mutex_;
  std::optional<FieldStats> totals_[kFieldCount];
  LatencyRecorder latency_;
};

/// One-shot convenience over Federation::search. Partial failures are
/// tolerated silently; use Federation directly to inspect them.
RankedList federated_search(const std::string& query, std::size_t k,
                            const std::vector<std::shared_ptr<ShardClient>>& shards, SearchMode mode,
                            StatsMode stats_mode);

}  // namespace shardsearch
