#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "shardsearch/ranked_list.hpp"

namespace shardsearch {

using RelevantSet = std::unordered_set<std::string>;

/// Relevance judgments; a document is relevant when its grade is >= 1.
struct Qrels {
  std::map<std::string, std::map<std::string, int>> judgments;

  RelevantSet relevant(const std::string& query_id) const;
  std::size_t relevant_count(const std::string& query_id) const;
  bool is_relevant(const std::string& query_id, const std::string& doc_id) const;
};

/// `qid 0 docid grade` lines. Throws Error{format_error} with the line number,
/// including for a repeated (query, doc) pair.
Qrels parse_qrels(std::istream& in);
Qrels load_qrels(const std::filesystem::path& path);
void write_qrels(std::ostream& out, const Qrels& qrels);

/// System rankings keyed by query id, in the order queries first appear.
class RunFile {
 public:
  /// Throws Error{invalid_args} if the query id is already present.
  void add(RankedList ranking, std::string tag = "shardsearch");

  const RankedList* find(const std::string& query_id) const;
  const std::vector<RankedList>& rankings() const noexcept { return rankings_; }
  const std::string& tag(std::size_t i) const { return tags_[i]; }
  std::size_t size() const noexcept { return rankings_.size(); }

 private:
  std::vector<RankedList> rankings_;
  std::vector<std::string> tags_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// TREC six-column run: `qid Q0 docid rank score tag`. Ranks must count
/// 1, 2, ... per query and scores must not increase; violations raise
/// Error{format_error} with the line number.
RunFile parse_run(std::istream& in);
RunFile load_run(const std::filesystem::path& path);
void write_run(std::ostream& out, const RunFile& run);
void save_run(const std::filesystem::path& path, const RunFile& run);

/// Shortest decimal text that parses back to the same double.
std::string format_score(double score);

struct Query {
  std::string id;
  std::string text;
};

/// `qid<TAB>text` lines; blank lines skipped.
std::vector<Query> parse_queries(std::istream& in);
std::vector<Query> load_queries(const std::filesystem::path& path);

/// Drops queries that analyze to at most one token and queries with no
/// relevant judgment. Order is preserved.
std::vector<Query> filter_queries(std::span<const Query> queries, const Qrels& qrels);

/// |top-k ∩ relevant| / |relevant|. Throws Error{no_relevant} for an empty set.
double recall_at_k(const RankedList& ranking, const RelevantSet& relevant, std::size_t k);

/// |top-k ∩ relevant| / k; positions past the end of the run count as misses.
double precision_at_k(const RankedList& ranking, const RelevantSet& relevant, std::size_t k);

/// 1/rank of the first relevant document, 0 if none. `depth` limits the
/// ranks considered; by default the whole run counts.
double reciprocal_rank(const RankedList& ranking, const RelevantSet& relevant,
                       std::optional<std::size_t> depth = std::nullopt);

struct MetricCutoffs {
  std::vector<std::size_t> recall{500, 1000};
  std::vector<std::size_t> precision{5, 10};
  std::optional<std::size_t> mrr_depth;

  void validate() const;
  /// Report column names, e.g. Recall@500 Recall@1000 MRR P@5 P@10.
  std::vector<std::string> metric_names() const;
};

struct MetricReport {
  std::vector<std::string> metrics;
  std::vector<std::string> query_ids;
  std::map<std::string, std::map<std::string, double>> per_query;
  std::map<std::string, double> mean;

  std::size_t query_count() const noexcept { return query_ids.size(); }
  std::string to_json(bool per_query_values = false) const;
  std::string to_table(bool per_query_rows = false) const;
};

/// Per-query metrics averaged arithmetically. Evaluated queries are those in
/// `qrels` with at least one relevant document (restricted to `only`, when
/// given). Evaluated queries missing from the run score 0 on every metric;
/// run queries without judgments are ignored.
MetricReport evaluate_run(const RunFile& run, const Qrels& qrels, const MetricCutoffs& cutoffs = {},
                          const std::vector<std::string>* only = nullptr);

}  // namespace shardsearch
