#pragma once

#include <optional>
#include <string>
#include <vector>

namespace shardsearch {

/// One retrieval hit. `url`/`title`/`body` ride along when the producer has
/// stored text; `first_stage_score` is set once a reranker has rescored it.
struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;
  int shard = 0;
  std::optional<std::string> url;
  std::optional<std::string> title;
  std::optional<std::string> body;
  std::optional<double> first_stage_score;
};

/// Total order used everywhere: score descending, then doc id ascending.
inline bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) noexcept {
  if (a.score != b.score) return a.score > b.score;
  return a.doc_id < b.doc_id;
}

struct RankedList {
  std::string query_id;
  std::vector<ScoredDoc> entries;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }
};

/// True when scores are non-increasing, ties ordered by doc id and ids unique.
bool is_well_ordered(const RankedList& list);

}  // namespace shardsearch
