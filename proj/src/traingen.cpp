#include "shardsearch/traingen.hpp"

#include <istream>
#include <nlohmann/json.hpp>
#include <random>
#include <unordered_set>

#include "hash.hpp"
#include "shardsearch/error.hpp"

namespace shardsearch {
namespace {

// Uniform integer in [0, bound) by rejection, independent of the standard
// library's distribution implementation.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = rng();
    if (r >= threshold) return r % bound;
  }
}

}  // namespace

AnchorFile parse_anchors(std::istream& in) {
  AnchorFile out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      out.errors.push_back("line " + std::to_string(line_no) + ": missing tab separator");
      continue;
    }
    AnchorRecord rec{line.substr(tab + 1), line.substr(0, tab)};
    if (rec.target_doc_id.empty() || rec.anchor_text.find_first_not_of(" \t") == std::string::npos) {
      out.errors.push_back("line " + std::to_string(line_no) + ": empty target or anchor text");
      continue;
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

void SamplingConfig::validate() const {
  if (n_bm25_negatives == 0) throw Error(Errc::invalid_args, "n_bm25_negatives must be > 0");
  if (pool_depth == 0) throw Error(Errc::invalid_args, "pool_depth must be > 0");
  if (n_random_negatives == 0) throw Error(Errc::invalid_args, "n_random_negatives must be > 0");
  if (n_random_negatives > pool_depth) throw Error(Errc::invalid_args, "n_random_negatives exceeds pool_depth");
}

RankedList FederationSource::search(const std::string& query, std::size_t k) {
  FederatedQuery q;
  q.text = query;
  q.k = k;
  q.stats = stats_;
  return federation_.search(q).list;
}

GenerationStats gen_anchor_examples(std::span<const AnchorRecord> anchors, LexicalSource& source,
                                    const SamplingConfig& cfg, const ExampleSink& sink) {
  cfg.validate();
  GenerationStats stats;
  for (const auto& anchor : anchors) {
    RankedList hits;
    try {
      if (!source.contains(anchor.target_doc_id)) {
        ++stats.skipped_missing_target;
        stats.warnings.push_back("target '" + anchor.target_doc_id + "' not in corpus; anchor skipped");
        continue;
      }
      // One extra slot covers the target appearing among the hits.
      hits = source.search(anchor.anchor_text, cfg.n_bm25_negatives + 1);
    } catch (const std::exception& e) {
      throw Error(Errc::retrieval_failure, "anchor '" + anchor.anchor_text + "': " + e.what());
    }
    TrainingExample ex;
    ex.query = anchor.anchor_text;
    ex.positive = anchor.target_doc_id;
    for (const auto& h : hits.entries) {
      if (ex.negatives.size() == cfg.n_bm25_negatives) break;
      if (h.doc_id != anchor.target_doc_id) ex.negatives.push_back(h.doc_id);
    }
    ex.short_count = ex.negatives.size() < cfg.n_bm25_negatives;
    stats.short_count += ex.short_count ? 1 : 0;
    ++stats.emitted;
    sink(std::move(ex));
  }
  return stats;
}

std::uint64_t query_seed(std::uint64_t global_seed, const std::string& query_id) {
  return detail::splitmix64(global_seed ^ detail::splitmix64(detail::fnv1a64(query_id)));
}

std::vector<std::string> sample_without_replacement(std::span<const std::string> pool, std::size_t count,
                                                    std::uint64_t seed) {
  std::vector<std::string> items(pool.begin(), pool.end());
  count = std::min(count, items.size());
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + uniform_below(rng, items.size() - i);
    std::swap(items[i], items[j]);
  }
  items.resize(count);
  return items;
}

GenerationStats gen_ranking_negatives(const Qrels& qrels, const RunFile& ranking, const SamplingConfig& cfg,
                                      const std::unordered_map<std::string, std::string>& query_texts,
                                      const ExampleSink& sink) {
  cfg.validate();
  GenerationStats stats;
  for (const auto& [qid, judged] : qrels.judgments) {
    const RelevantSet positives = qrels.relevant(qid);
    if (positives.empty()) continue;
    const RankedList* ranked = ranking.find(qid);
    if (ranked == nullptr || ranked->empty()) {
      ++stats.skipped_missing_ranking;
      stats.warnings.push_back("MissingRanking: query '" + qid + "' has no ranking; skipped");
      continue;
    }
    std::vector<std::string> pool;
    const std::size_t depth = std::min(cfg.pool_depth, ranked->size());
    for (std::size_t i = 0; i < depth; ++i) {
      if (!positives.count(ranked->entries[i].doc_id)) pool.push_back(ranked->entries[i].doc_id);
    }
    auto text_it = query_texts.find(qid);
    const std::string& text = text_it == query_texts.end() ? qid : text_it->second;

    // One generator per query; positives consume it in id order.
    std::mt19937_64 rng(query_seed(cfg.rng_seed, qid));
    for (const auto& [doc, grade] : judged) {
      if (grade < 1) continue;
      TrainingExample ex;
      ex.query = text;
      ex.positive = doc;
      ex.negatives = sample_without_replacement(pool, cfg.n_random_negatives, rng());
      ex.short_count = ex.negatives.size() < cfg.n_random_negatives;
      stats.short_count += ex.short_count ? 1 : 0;
      ++stats.emitted;
      sink(std::move(ex));
    }
  }
  return stats;
}

void attach_texts(TrainingExample& example, const std::function<std::optional<DocText>(const std::string&)>& resolve) {
  example.positive_text = resolve(example.positive).value_or(DocText{});
  example.negative_texts.clear();
  for (const auto& id : example.negatives) example.negative_texts.push_back(resolve(id).value_or(DocText{}));
}

std::string to_json_line(const TrainingExample& example, bool with_text) {
  nlohmann::ordered_json j;
  j["query"] = example.query;
  j["positive"] = example.positive;
  j["negatives"] = example.negatives;
  j["short_count"] = example.short_count;
  if (with_text) {
    const auto text_json = [](const DocText& d) {
      return nlohmann::ordered_json{{"url", d.url}, {"title", d.title}, {"body", d.body}};
    };
    j["positive_text"] = text_json(example.positive_text.value_or(DocText{}));
    j["negative_texts"] = nlohmann::ordered_json::array();
    for (const auto& d : example.negative_texts) j["negative_texts"].push_back(text_json(d));
  }
  return j.dump();
}

}  // namespace shardsearch
