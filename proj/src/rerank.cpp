#include "shardsearch/rerank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "http_util.hpp"
#include "shardsearch/analyzer.hpp"
#include "shardsearch/error.hpp"

namespace shardsearch {

double overlap_scorer(std::string_view query, const DocText& doc) {
  const auto q = analyze(query);
  if (q.empty()) return 0.0;
  const std::unordered_set<std::string> query_terms(q.begin(), q.end());
  const auto d = analyze(doc.title + " " + doc.body);
  const std::unordered_set<std::string> doc_terms(d.begin(), d.end());
  std::size_t hits = 0;
  for (const auto& t : query_terms) hits += doc_terms.count(t);
  return static_cast<double>(hits) / static_cast<double>(query_terms.size());
}

std::vector<double> OverlapScorer::score_batch(const std::string& query, std::span<const DocText> docs) {
  std::vector<double> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(overlap_scorer(query, d));
  return out;
}

std::vector<double> FunctionScorer::score_batch(const std::string& query, std::span<const DocText> docs) {
  std::vector<double> out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    ++calls_;
    out.push_back(fn_(query, d));
  }
  return out;
}

std::vector<double> remote_score_batch(const std::string& endpoint, const std::string& query,
                                       std::span<const DocText> docs, std::chrono::milliseconds timeout) {
  if (docs.empty()) return {};
  nlohmann::json req;
  req["query"] = query;
  req["docs"] = nlohmann::json::array();
  for (const auto& d : docs) req["docs"].push_back({{"url", d.url}, {"title", d.title}, {"body", d.body}});

  auto client = detail::make_client(endpoint, timeout);
  const auto res = detail::post_json(*client, "/score", req);
  const auto it = res.find("scores");
  if (it == res.end() || !it->is_array()) throw Error(Errc::malformed_json, "/score response lacks 'scores'");
  if (it->size() != docs.size()) {
    throw Error(Errc::shape_mismatch,
                "/score returned " + std::to_string(it->size()) + " scores for " + std::to_string(docs.size()) + " docs");
  }
  std::vector<double> scores;
  scores.reserve(docs.size());
  for (const auto& s : *it) {
    if (!s.is_number()) throw Error(Errc::malformed_json, "/score entry is not a number");
    scores.push_back(s.get<double>());
  }
  return scores;
}

RemoteScorer::RemoteScorer(std::string endpoint, std::size_t batch_size, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), batch_size_(batch_size == 0 ? 1 : batch_size), timeout_(timeout) {}

std::vector<double> RemoteScorer::score_batch(const std::string& query, std::span<const DocText> docs) {
  std::vector<double> out;
  out.reserve(docs.size());
  for (std::size_t start = 0; start < docs.size(); start += batch_size_) {
    const auto part = remote_score_batch(endpoint_, query, docs.subspan(start, std::min(batch_size_, docs.size() - start)),
                                         timeout_);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

void RerankConfig::validate() const {
  if (output_size == 0) throw Error(Errc::invalid_args, "rerank output size must be > 0");
  if (output_size > first_stage_depth) throw Error(Errc::invalid_args, "rerank output size exceeds first-stage depth");
}

RankedList rerank_candidates(const std::string& query, const RankedList& candidates, const RerankConfig& cfg,
                             Scorer& scorer) {
  cfg.validate();
  RankedList out;
  out.query_id = candidates.query_id;
  const std::size_t n = std::min(cfg.first_stage_depth, candidates.size());
  if (n == 0) return out;

  std::vector<DocText> texts;
  texts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = candidates.entries[i];
    texts.push_back({c.url.value_or(""), c.title.value_or(""), c.body.value_or("")});
  }

  std::vector<double> scores;
  try {
    scores = scorer.score_batch(query, texts);
  } catch (const std::exception& e) {
    throw Error(Errc::scorer_failure, e.what());
  }
  if (scores.size() != n) {
    throw Error(Errc::scorer_failure,
                "scorer returned " + std::to_string(scores.size()) + " scores for " + std::to_string(n) + " candidates");
  }

  std::vector<ScoredDoc> rescored;
  rescored.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(scores[i])) throw Error(Errc::scorer_failure, "non-finite score for " + candidates.entries[i].doc_id);
    ScoredDoc d = candidates.entries[i];
    d.first_stage_score = d.score;
    d.score = scores[i];
    rescored.push_back(std::move(d));
  }
  const std::size_t take = std::min(cfg.output_size, n);
  std::partial_sort(rescored.begin(), rescored.begin() + static_cast<std::ptrdiff_t>(take), rescored.end(),
                    ranks_before);
  rescored.resize(take);
  out.entries = std::move(rescored);
  return out;
}

RankedList rerank_query(Federation& federation, const std::string& query, const RerankConfig& cfg, Scorer& scorer,
                        SearchMode first_stage, StatsMode stats) {
  cfg.validate();
  FederatedQuery fq;
  fq.text = query;
  fq.k = cfg.first_stage_depth;
  fq.mode = first_stage;
  fq.stats = stats;
  fq.include_body = true;
  RankedList candidates = federation.search(fq).list;
  if (first_stage == SearchMode::dense) {
    for (auto& c : candidates.entries) {
      if (c.body) continue;
      if (auto stored = federation.fetch(c.doc_id)) {
        c.url = stored->url;
        c.title = stored->title;
        c.body = stored->body;
      }
    }
  }
  return rerank_candidates(query, candidates, cfg, scorer);
}

}  // namespace shardsearch
