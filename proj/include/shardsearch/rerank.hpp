#pragma once

#include <chrono>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shardsearch/federation.hpp"
#include "shardsearch/ranked_list.hpp"

namespace shardsearch {

/// Document text handed to a scorer.
struct DocText {
  std::string url;
  std::string title;
  std::string body;
};

/// Scores (query, document) pairs. Must be deterministic for fixed inputs.
class Scorer {
 public:
  virtual ~Scorer() = default;
  /// One score per doc, order-aligned with `docs`.
  virtual std::vector<double> score_batch(const std::string& query, std::span<const DocText> docs) = 0;
};

/// Fraction of distinct query tokens present in title+body; 0 for a query
/// with no tokens.
double overlap_scorer(std::string_view query, const DocText& doc);

class OverlapScorer final : public Scorer {
 public:
  std::vector<double> score_batch(const std::string& query, std::span<const DocText> docs) override;
};

/// Wraps a callable, mainly for tests and offline experiments.
class FunctionScorer final : public Scorer {
 public:
  using Fn = std::function<double(const std::string& query, const DocText& doc)>;
  explicit FunctionScorer(Fn fn) : fn_(std::move(fn)) {}
  std::vector<double> score_batch(const std::string& query, std::span<const DocText> docs) override;
  std::size_t calls() const noexcept { return calls_; }

 private:
  Fn fn_;
  std::size_t calls_ = 0;
};

/// One `POST /score` round trip. Throws UpstreamError on a non-200 answer,
/// Error{shape_mismatch} when the score count differs from docs.size(), and
/// Error{timeout}.
std::vector<double> remote_score_batch(const std::string& endpoint, const std::string& query,
                                       std::span<const DocText> docs,
                                       std::chrono::milliseconds timeout = std::chrono::seconds(30));

/// Remote cross-encoder: sequential batches of `batch_size` per query.
class RemoteScorer final : public Scorer {
 public:
  explicit RemoteScorer(std::string endpoint, std::size_t batch_size = 32,
                        std::chrono::milliseconds timeout = std::chrono::seconds(30));
  std::vector<double> score_batch(const std::string& query, std::span<const DocText> docs) override;

 private:
  std::string endpoint_;
  std::size_t batch_size_;
  std::chrono::milliseconds timeout_;
};

struct RerankConfig {
  std::size_t first_stage_depth = 1000;
  std::size_t output_size = 10;

  /// Throws Error{invalid_args} unless 0 < output_size <= first_stage_depth.
  void validate() const;
};

/// Rescores the first `first_stage_depth` candidates and returns the best
/// `output_size` by scorer score (ties: doc id). Each output entry keeps its
/// first-stage score in `first_stage_score`. Scorer exceptions surface as
/// Error{scorer_failure}.
RankedList rerank_candidates(const std::string& query, const RankedList& candidates, const RerankConfig& cfg,
                             Scorer& scorer);

/// First-stage retrieval through a federation followed by reranking. Dense
/// first stage fetches stored text for every candidate that lacks it.
RankedList rerank_query(Federation& federation, const std::string& query, const RerankConfig& cfg, Scorer& scorer,
                        SearchMode first_stage = SearchMode::lexical, StatsMode stats = StatsMode::per_shard);

}  // namespace shardsearch
