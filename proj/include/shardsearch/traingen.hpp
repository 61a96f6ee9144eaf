#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "shardsearch/evalkit.hpp"
#include "shardsearch/federation.hpp"
#include "shardsearch/lexical_index.hpp"
#include "shardsearch/rerank.hpp"

namespace shardsearch {

/// Hyperlink text used as a pseudo-query for the page it points at.
struct AnchorRecord {
  std::string anchor_text;
  std::string target_doc_id;
};

struct AnchorFile {
  std::vector<AnchorRecord> records;
  std::vector<std::string> errors;  // one message per rejected line
};

/// `target_doc_id<TAB>anchor_text` lines. Bad lines are reported and skipped.
AnchorFile parse_anchors(std::istream& in);

struct SamplingConfig {
  std::size_t n_bm25_negatives = 30;
  std::size_t pool_depth = 100;
  std::size_t n_random_negatives = 10;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct TrainingExample {
  std::string query;
  std::string positive;
  std::vector<std::string> negatives;
  bool short_count = false;  // fewer negatives than requested were available

  std::optional<DocText> positive_text;
  std::vector<DocText> negative_texts;
};

struct GenerationStats {
  std::size_t emitted = 0;
  std::size_t short_count = 0;
  std::size_t skipped_missing_target = 0;
  std::size_t skipped_missing_ranking = 0;
  std::vector<std::string> warnings;
};

/// BM25 retrieval used to mine anchor negatives.
class LexicalSource {
 public:
  virtual ~LexicalSource() = default;
  virtual RankedList search(const std::string& query, std::size_t k) = 0;
  virtual bool contains(const std::string& doc_id) = 0;
};

class IndexSource final : public LexicalSource {
 public:
  explicit IndexSource(const LexicalIndex& index) : index_(index) {}
  RankedList search(const std::string& query, std::size_t k) override { return search_lexical(index_, query, k); }
  bool contains(const std::string& doc_id) override { return index_.contains(doc_id); }

 private:
  const LexicalIndex& index_;
};

class FederationSource final : public LexicalSource {
 public:
  explicit FederationSource(Federation& federation, StatsMode stats = StatsMode::per_shard)
      : federation_(federation), stats_(stats) {}
  RankedList search(const std::string& query, std::size_t k) override;
  bool contains(const std::string& doc_id) override { return federation_.fetch(doc_id).has_value(); }

 private:
  Federation& federation_;
  StatsMode stats_;
};

using ExampleSink = std::function<void(TrainingExample&&)>;

/// For every anchor, runs BM25 with the anchor text and keeps the first
/// `n_bm25_negatives` hits that are not the target. Anchors whose target is
/// not in the corpus are skipped and counted. Retrieval errors abort with
/// Error{retrieval_failure}.
GenerationStats gen_anchor_examples(std::span<const AnchorRecord> anchors, LexicalSource& source,
                                    const SamplingConfig& cfg, const ExampleSink& sink);

/// For every judged (query, positive): samples `n_random_negatives` docs
/// uniformly without replacement from the ranking's top `pool_depth` minus
/// every judged positive of that query. The generator for a query is seeded
/// from (rng_seed, query id) only, so output does not depend on input order.
/// Queries absent from the ranking are skipped with a warning. `query_texts`
/// maps ids to text; ids without text are emitted as the query string.
GenerationStats gen_ranking_negatives(const Qrels& qrels, const RunFile& ranking, const SamplingConfig& cfg,
                                      const std::unordered_map<std::string, std::string>& query_texts,
                                      const ExampleSink& sink);

/// Uniform sample of `count` distinct elements of `pool` (partial
/// Fisher-Yates), reproducible for a given seed on every platform.
std::vector<std::string> sample_without_replacement(std::span<const std::string> pool, std::size_t count,
                                                    std::uint64_t seed);

/// Seed for one query: mixes the global seed with a stable hash of the id.
std::uint64_t query_seed(std::uint64_t global_seed, const std::string& query_id);

/// Fills positive_text/negative_texts from `resolve`; unresolved ids get
/// empty text.
void attach_texts(TrainingExample& example, const std::function<std::optional<DocText>(const std::string&)>& resolve);

/// One JSON-lines record: {"query","positive","negatives","short_count"} plus
/// the resolved texts when `with_text` is set.
std::string to_json_line(const TrainingExample& example, bool with_text = false);

}  // namespace shardsearch
