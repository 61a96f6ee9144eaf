#include "shardsearch/federation.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <set>
#include <unordered_set>

#include "shardsearch/analyzer.hpp"
#include "shardsearch/error.hpp"

namespace shardsearch {

std::string_view to_string(SearchMode mode) noexcept { return mode == SearchMode::dense ? "dense" : "lexical"; }

std::string_view to_string(StatsMode mode) noexcept { return mode == StatsMode::global ? "global" : "per-shard"; }

SearchMode parse_search_mode(std::string_view name) {
  if (name == "lexical") return SearchMode::lexical;
  if (name == "dense") return SearchMode::dense;
  throw Error(Errc::invalid_args, "unknown mode '" + std::string(name) + "' (expected lexical|dense)");
}

StatsMode parse_stats_mode(std::string_view name) {
  if (name == "per-shard") return StatsMode::per_shard;
  if (name == "global") return StatsMode::global;
  throw Error(Errc::invalid_args, "unknown stats mode '" + std::string(name) + "' (expected per-shard|global)");
}

RankedList merge_ranked_lists(std::span<const RankedList> lists, std::size_t k) {
  std::vector<ScoredDoc> all;
  std::unordered_set<std::string_view> seen;
  std::size_t total = 0;
  for (const auto& l : lists) total += l.size();
  all.reserve(total);
  seen.reserve(total);
  for (const auto& l : lists) {
    for (const auto& e : l.entries) {
      if (!seen.insert(e.doc_id).second) throw Error(Errc::duplicate_across_shards, e.doc_id);
      all.push_back(e);
    }
  }
  RankedList out;
  if (!lists.empty()) out.query_id = lists.front().query_id;
  const std::size_t take = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), ranks_before);
  all.resize(take);
  out.entries = std::move(all);
  return out;
}

// ---------------------------------------------------------------------------

Millis latency_percentile(std::span<const Millis> samples, double p) {
  if (samples.empty()) throw Error(Errc::empty_samples, "no latency samples");
  if (!(p > 0.0 && p <= 1.0)) throw Error(Errc::invalid_args, "percentile must lie in (0, 1]");
  std::vector<Millis> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  // Tolerance absorbs representation error such as 0.95*100 = 95.000000001.
  auto rank = static_cast<std::size_t>(std::ceil(p * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

LatencyStats LatencyStats::from_samples(std::span<const Millis> samples) {
  LatencyStats s;
  s.count = samples.size();
  if (samples.empty()) return s;
  s.p50 = latency_percentile(samples, 0.50);
  s.p95 = latency_percentile(samples, 0.95);
  s.max = *std::max_element(samples.begin(), samples.end());
  return s;
}

void LatencyRecorder::add(Millis sample) {
  std::lock_guard lock(mutex_);
  samples_.push_back(sample);
}

std::vector<Millis> LatencyRecorder::samples() const {
  std::lock_guard lock(mutex_);
  return samples_;
}

LatencyStats LatencyRecorder::stats() const { return LatencyStats::from_samples(samples()); }

// ---------------------------------------------------------------------------

LocalShard::LocalShard(std::string name, std::shared_ptr<const LexicalIndex> lexical,
                       std::shared_ptr<const FlatVectorIndex> dense, std::shared_ptr<Encoder> encoder)
    : name_(std::move(name)), lexical_(std::move(lexical)), dense_(std::move(dense)), encoder_(std::move(encoder)) {
  if (dense_ && encoder_ && encoder_->dim() != dense_->dim()) {
    throw Error(Errc::dimension_mismatch, "encoder dim " + std::to_string(encoder_->dim()) + " vs index dim " +
                                              std::to_string(dense_->dim()));
  }
}

RankedList LocalShard::search(const ShardQuery& query) {
  if (query.mode == SearchMode::lexical) {
    if (!lexical_) throw Error(Errc::invalid_args, name_ + ": no lexical index loaded");
    LexicalQueryOptions opts;
    opts.field = query.field;
    opts.include_body = query.include_body;
    opts.global_stats = query.global_stats ? &*query.global_stats : nullptr;
    return search_lexical(*lexical_, query.text, query.k, opts);
  }
  if (!dense_ || !encoder_) throw Error(Errc::invalid_args, name_ + ": no dense index loaded");
  RankedList out = search_dense(*dense_, encoder_->embed_one(query.text), query.k);
  if (lexical_) {
    for (auto& hit : out.entries) {
      if (auto ord = lexical_->ordinal(hit.doc_id)) {
        const auto& s = lexical_->stored(*ord);
        hit.url = s.url;
        hit.title = s.title;
        if (query.include_body) hit.body = s.body;
      }
    }
  }
  return out;
}

FieldStats LocalShard::field_stats(Field field) {
  if (!lexical_) return {field, 0, 0};
  return lexical_->field_stats(field);
}

std::unordered_map<std::string, std::uint64_t> LocalShard::doc_freqs(std::span<const std::string> terms, Field field) {
  std::unordered_map<std::string, std::uint64_t> out;
  for (const auto& t : terms) out[t] = lexical_ ? lexical_->doc_freq(t, field) : 0;
  return out;
}

std::optional<StoredFields> LocalShard::fetch(const std::string& doc_id) {
  if (!lexical_) return std::nullopt;
  auto ord = lexical_->ordinal(doc_id);
  if (!ord) return std::nullopt;
  return lexical_->stored(*ord);
}

// ---------------------------------------------------------------------------

std::vector<int> FederatedResult::failed_shards() const {
  std::vector<int> out;
  for (const auto& s : shards) {
    if (!s.ok) out.push_back(s.shard);
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

template <typename T>
struct Gathered {
  std::vector<std::optional<T>> values;
  std::vector<std::string> errors;
};

// Runs `fn(shard)` on every shard whose `active` flag is set, concurrently.
template <typename T, typename Fn>
Gathered<T> gather(const std::vector<std::shared_ptr<ShardClient>>& shards, const std::vector<bool>& active, Fn fn) {
  std::vector<std::future<T>> futures(shards.size());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    if (active[i]) futures[i] = std::async(std::launch::async, [&, i] { return fn(*shards[i]); });
  }
  Gathered<T> out;
  out.values.resize(shards.size());
  out.errors.resize(shards.size());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    if (!active[i]) continue;
    try {
      out.values[i] = futures[i].get();
    } catch (const std::exception& e) {
      out.errors[i] = e.what();
    }
  }
  return out;
}

}  // namespace

Federation::Federation(std::vector<std::shared_ptr<ShardClient>> shards) : shards_(std::move(shards)) {
  if (shards_.empty()) throw Error(Errc::invalid_args, "federation needs at least one shard");
}

bool Federation::publish_global_stats() {
  bool all_ok = true;
  for (std::size_t f = 0; f < kFieldCount; ++f) {
    const auto field = static_cast<Field>(f);
    const auto got = gather<FieldStats>(shards_, std::vector<bool>(shards_.size(), true),
                                        [field](ShardClient& s) { return s.field_stats(field); });
    FieldStats sum{field, 0, 0};
    bool ok = true;
    for (const auto& v : got.values) {
      if (!v) {
        ok = false;
        continue;
      }
      sum.doc_count += v->doc_count;
      sum.total_tokens += v->total_tokens;
    }
    std::lock_guard lock(stats_mutex_);
    if (ok) totals_[f] = sum;
    all_ok = all_ok && ok;
  }
  return all_ok;
}

std::optional<FieldStats> Federation::cached_totals(Field field) {
  std::lock_guard lock(stats_mutex_);
  return totals_[static_cast<std::size_t>(field)];
}

FederatedResult Federation::search(const FederatedQuery& query) {
  const auto start = Clock::now();
  FederatedResult result;
  result.shards.resize(shards_.size());
  for (std::size_t i = 0; i < shards_.size(); ++i) {
    result.shards[i].shard = static_cast<int>(i);
    result.shards[i].name = shards_[i]->name();
  }
  std::vector<bool> active(shards_.size(), true);

  std::optional<CollectionStats> global;
  if (query.mode == SearchMode::lexical && query.stats == StatsMode::global) {
    if (!cached_totals(query.field)) publish_global_stats();
    std::set<std::string> unique_terms;
    for (auto& t : analyze(query.text)) unique_terms.insert(std::move(t));
    const std::vector<std::string> terms(unique_terms.begin(), unique_terms.end());

    struct ShardStats {
      FieldStats totals;
      std::unordered_map<std::string, std::uint64_t> df;
    };
    const auto cached = cached_totals(query.field);
    const auto got = gather<ShardStats>(shards_, active, [&](ShardClient& s) {
      ShardStats st;
      if (!cached) st.totals = s.field_stats(query.field);
      st.df = s.doc_freqs(terms, query.field);
      return st;
    });
    CollectionStats cs;
    if (cached) {
      cs.doc_count = cached->doc_count;
      cs.total_tokens = cached->total_tokens;
    }
    for (const auto& t : terms) cs.doc_freqs[t] = 0;
    for (std::size_t i = 0; i < shards_.size(); ++i) {
      if (!got.values[i]) {
        active[i] = false;
        result.shards[i].error = "stats: " + got.errors[i];
        continue;
      }
      if (!cached) {
        cs.doc_count += got.values[i]->totals.doc_count;
        cs.total_tokens += got.values[i]->totals.total_tokens;
      }
      for (const auto& [term, df] : got.values[i]->df) cs.doc_freqs[term] += df;
    }
    global = std::move(cs);
  }

  ShardQuery sq;
  sq.text = query.text;
  sq.k = query.k;
  sq.mode = query.mode;
  sq.field = query.field;
  sq.include_body = query.include_body;
  sq.global_stats = std::move(global);

  struct Timed {
    RankedList list;
    Millis took;
  };
  auto got = gather<Timed>(shards_, active, [&](ShardClient& s) {
    const auto t0 = Clock::now();
    RankedList l = s.search(sq);
    return Timed{std::move(l), Clock::now() - t0};
  });

  std::vector<RankedList> lists;
  for (std::size_t i = 0; i < shards_.size(); ++i) {
    auto& outcome = result.shards[i];
    if (!active[i]) continue;
    if (!got.values[i]) {
      outcome.error = got.errors[i];
      continue;
    }
    outcome.ok = true;
    outcome.took = got.values[i]->took;
    outcome.hits = got.values[i]->list.size();
    RankedList l = std::move(got.values[i]->list);
    for (auto& e : l.entries) e.shard = static_cast<int>(i);
    lists.push_back(std::move(l));
  }
  if (lists.empty()) {
    std::string why;
    for (const auto& s : result.shards) why += "\n  " + s.name + ": " + s.error;
    throw Error(Errc::all_shards_failed, "every shard failed:" + why);
  }
  result.degraded = lists.size() != shards_.size();
  result.list = merge_ranked_lists(lists, query.k);
  result.took = Clock::now() - start;
  latency_.add(result.took);
  return result;
}

std::optional<StoredFields> Federation::fetch(const std::string& doc_id) {
  const auto got = gather<std::optional<StoredFields>>(shards_, std::vector<bool>(shards_.size(), true),
                                                       [&](ShardClient& s) { return s.fetch(doc_id); });
  for (const auto& v : got.values) {
    if (v && *v) return **v;
  }
  return std::nullopt;
}

RankedList federated_search(const std::string& query, std::size_t k,
                            const std::vector<std::shared_ptr<ShardClient>>& shards, SearchMode mode,
                            StatsMode stats_mode) {
  Federation fed(shards);
  FederatedQuery q;
  q.text = query;
  q.k = k;
  q.mode = mode;
  q.stats = stats_mode;
  return fed.search(q).list;
}

}  // namespace shardsearch
