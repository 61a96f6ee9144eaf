#include "shardsearch/lexical_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "binary_io.hpp"
#include "shardsearch/analyzer.hpp"
#include "shardsearch/error.hpp"

namespace shardsearch {

std::string_view to_string(Field field) noexcept {
  switch (field) {
    case Field::url: return "url";
    case Field::title: return "title";
    case Field::body: return "body";
  }
  return "body";
}

Field parse_field(std::string_view name) {
  if (name == "url") return Field::url;
  if (name == "title") return Field::title;
  if (name == "body") return Field::body;
  throw Error(Errc::invalid_args, "unknown field '" + std::string(name) + "'");
}

void Bm25Params::validate() const {
  if (!(k1 > 0.0) || !std::isfinite(k1)) throw Error(Errc::invalid_args, "bm25 k1 must be > 0");
  if (!(b >= 0.0 && b <= 1.0)) throw Error(Errc::invalid_args, "bm25 b must lie in [0, 1]");
}

double bm25_idf(std::uint64_t df, std::uint64_t doc_count) {
  if (df > doc_count) {
    throw Error(Errc::invalid_stats, "df " + std::to_string(df) + " exceeds N " + std::to_string(doc_count));
  }
  const double n = static_cast<double>(doc_count);
  const double d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double bm25_term_score(std::uint64_t tf, std::uint64_t df, std::uint64_t doc_count, std::uint64_t doc_length,
                       double avgdl, const Bm25Params& params) {
  if (tf == 0) return 0.0;
  if (df == 0) throw Error(Errc::invalid_stats, "df must be >= 1 when tf > 0");
  if (!(avgdl > 0.0)) throw Error(Errc::invalid_stats, "avgdl must be > 0");
  const double idf = bm25_idf(df, doc_count);
  const double f = static_cast<double>(tf);
  const double norm = 1.0 - params.b + params.b * static_cast<double>(doc_length) / avgdl;
  return idf * f * (params.k1 + 1.0) / (f + params.k1 * norm);
}

LexicalIndex::LexicalIndex(Bm25Params params) : params_(params) { params_.validate(); }

void LexicalIndex::add(const Document& doc) {
  if (state_ != State::building) throw Error(Errc::invalid_args, "index already committed");
  if (!ordinals_.emplace(doc.id, static_cast<std::uint32_t>(stored_.size())).second) {
    throw Error(Errc::duplicate_doc_id, doc.id);
  }
  const auto ordinal = static_cast<std::uint32_t>(stored_.size());
  const std::string_view texts[kFieldCount] = {doc.url, doc.title, doc.body};

  std::unordered_map<std::string, std::uint32_t> counts;
  for (std::size_t f = 0; f < kFieldCount; ++f) {
    FieldIndex& fi = fields_[f];
    counts.clear();
    auto tokens = analyze(texts[f]);
    for (auto& tok : tokens) ++counts[std::move(tok)];
    // Sort so term ids are assigned in a stable order regardless of hashing.
    std::vector<std::pair<std::string, std::uint32_t>> sorted(counts.begin(), counts.end());
    std::sort(sorted.begin(), sorted.end());
    for (auto& [term, tf] : sorted) {
      auto [it, inserted] = fi.terms.emplace(term, static_cast<std::uint32_t>(fi.postings.size()));
      if (inserted) fi.postings.emplace_back();
      fi.postings[it->second].push_back({ordinal, tf});
    }
    fi.lengths.push_back(static_cast<std::uint32_t>(tokens.size()));
    fi.total_tokens += tokens.size();
  }
  stored_.push_back({doc.id, doc.segment, doc.url, doc.title, doc.body});
}

void LexicalIndex::commit() { state_ = State::committed; }

void LexicalIndex::require_committed() const {
  if (state_ != State::committed) throw Error(Errc::not_committed, "index is still building");
}

FieldStats LexicalIndex::field_stats(Field field) const {
  return {field, stored_.size(), fields_[idx(field)].total_tokens};
}

std::uint64_t LexicalIndex::doc_freq(std::string_view term, Field field) const {
  return postings(term, field).size();
}

std::span<const Posting> LexicalIndex::postings(std::string_view term, Field field) const {
  const FieldIndex& fi = fields_[idx(field)];
  auto it = fi.terms.find(std::string(term));
  if (it == fi.terms.end()) return {};
  return fi.postings[it->second];
}

std::optional<std::uint32_t> LexicalIndex::ordinal(std::string_view doc_id) const {
  auto it = ordinals_.find(std::string(doc_id));
  if (it == ordinals_.end()) return std::nullopt;
  return it->second;
}

namespace {
constexpr char kLexMagic[4] = {'L', 'X', 'I', 'X'};
}

void LexicalIndex::save(const std::filesystem::path& path) const {
  require_committed();
  detail::ByteWriter w;
  w.put<std::uint8_t>(kSnapshotVersion);
  w.put_raw(std::string_view(kLexMagic, sizeof(kLexMagic)));
  w.put<double>(params_.k1);
  w.put<double>(params_.b);
  w.put<std::uint64_t>(stored_.size());
  for (const auto& s : stored_) {
    w.put_string(s.id);
    w.put<std::int64_t>(s.segment);
    w.put_string(s.url);
    w.put_string(s.title);
    w.put_string(s.body);
  }
  for (const FieldIndex& fi : fields_) {
    w.put_array<std::uint32_t>(fi.lengths);
    // Terms in lexicographic order so identical input gives identical bytes.
    std::vector<const std::pair<const std::string, std::uint32_t>*> entries;
    entries.reserve(fi.terms.size());
    for (const auto& e : fi.terms) entries.push_back(&e);
    std::sort(entries.begin(), entries.end(), [](auto* a, auto* b) { return a->first < b->first; });
    w.put<std::uint64_t>(entries.size());
    for (const auto* e : entries) {
      const auto& plist = fi.postings[e->second];
      w.put_string(e->first);
      w.put<std::uint64_t>(plist.size());
      for (const Posting& p : plist) {
        w.put<std::uint32_t>(p.doc);
        w.put<std::uint32_t>(p.tf);
      }
    }
  }
  w.put<std::uint32_t>(detail::crc32_of(w.buffer()));
  detail::write_file(path, w.buffer());
}

LexicalIndex LexicalIndex::load(const std::filesystem::path& path) {
  const std::string data = detail::read_file(path);
  if (data.size() < 1 + sizeof(kLexMagic) + 4) throw Error(Errc::corrupt_file, "file too short");
  if (static_cast<std::uint8_t>(data[0]) != kSnapshotVersion) {
    throw Error(Errc::corrupt_file, "unsupported snapshot version " + std::to_string(static_cast<unsigned char>(data[0])));
  }
  if (data.compare(1, sizeof(kLexMagic), kLexMagic, sizeof(kLexMagic)) != 0) {
    throw Error(Errc::corrupt_file, "bad magic");
  }
  const std::string_view body(data.data(), data.size() - 4);
  detail::ByteReader trailer(std::string_view(data).substr(data.size() - 4));
  if (trailer.get<std::uint32_t>() != detail::crc32_of(body)) throw Error(Errc::corrupt_file, "checksum mismatch");

  detail::ByteReader r(body);
  r.take(1 + sizeof(kLexMagic));
  Bm25Params params;
  params.k1 = r.get<double>();
  params.b = r.get<double>();
  LexicalIndex index(params);
  const auto n = r.get<std::uint64_t>();
  if (n > r.remaining()) throw Error(Errc::corrupt_file, "document count exceeds payload");
  index.stored_.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    StoredFields s;
    s.id = r.get_string();
    s.segment = r.get<std::int64_t>();
    s.url = r.get_string();
    s.title = r.get_string();
    s.body = r.get_string();
    if (!index.ordinals_.emplace(s.id, static_cast<std::uint32_t>(i)).second) {
      throw Error(Errc::corrupt_file, "duplicate doc id " + s.id);
    }
    index.stored_.push_back(std::move(s));
  }
  for (FieldIndex& fi : index.fields_) {
    fi.lengths.resize(n);
    const auto raw = r.take(n * sizeof(std::uint32_t));
    std::memcpy(fi.lengths.data(), raw.data(), raw.size());
    fi.total_tokens = std::accumulate(fi.lengths.begin(), fi.lengths.end(), std::uint64_t{0});
    const auto nterms = r.get<std::uint64_t>();
    if (nterms > r.remaining()) throw Error(Errc::corrupt_file, "term count exceeds payload");
    fi.postings.reserve(nterms);
    for (std::uint64_t t = 0; t < nterms; ++t) {
      std::string term = r.get_string();
      const auto len = r.get<std::uint64_t>();
      if (len > r.remaining() / 8) throw Error(Errc::corrupt_file, "postings exceed payload");
      std::vector<Posting> plist(len);
      for (auto& p : plist) {
        p.doc = r.get<std::uint32_t>();
        p.tf = r.get<std::uint32_t>();
        if (p.doc >= n || p.tf == 0) throw Error(Errc::corrupt_file, "invalid posting");
      }
      fi.terms.emplace(std::move(term), static_cast<std::uint32_t>(fi.postings.size()));
      fi.postings.push_back(std::move(plist));
    }
  }
  if (r.remaining() != 0) throw Error(Errc::corrupt_file, "trailing bytes");
  index.state_ = State::committed;
  return index;
}

LexicalIndex build_index(std::span<const Document> docs, Bm25Params params) {
  LexicalIndex index(params);
  for (const Document& d : docs) index.add(d);
  index.commit();
  return index;
}

RankedList search_lexical(const LexicalIndex& index, std::string_view query, std::size_t k,
                          const LexicalQueryOptions& options) {
  if (!index.committed()) throw Error(Errc::not_committed, "search on a building index");
  RankedList out;
  if (k == 0 || index.doc_count() == 0) return out;

  const FieldStats local = index.field_stats(options.field);
  const CollectionStats* global = options.global_stats;
  const std::uint64_t n = global ? global->doc_count : local.doc_count;
  const double avgdl = global ? (global->doc_count == 0 ? 0.0
                                                          : static_cast<double>(global->total_tokens) /
                                                                static_cast<double>(global->doc_count))
                              : local.avgdl();

  std::vector<double> acc(index.doc_count(), 0.0);
  std::vector<std::uint32_t> touched;
  for (const std::string& term : analyze(query)) {
    const auto plist = index.postings(term, options.field);
    if (plist.empty()) continue;
    std::uint64_t df = plist.size();
    if (global) {
      auto it = global->doc_freqs.find(term);
      if (it == global->doc_freqs.end()) throw Error(Errc::invalid_stats, "no global df for term '" + term + "'");
      df = it->second;
    }
    for (const Posting& p : plist) {
      if (acc[p.doc] == 0.0) touched.push_back(p.doc);
      acc[p.doc] += bm25_term_score(p.tf, df, n, index.doc_length(p.doc, options.field), avgdl, index.params());
    }
  }

  const auto before = [&](std::uint32_t a, std::uint32_t b) {
    if (acc[a] != acc[b]) return acc[a] > acc[b];
    return index.stored(a).id < index.stored(b).id;
  };
  const std::size_t take = std::min(k, touched.size());
  std::partial_sort(touched.begin(), touched.begin() + static_cast<std::ptrdiff_t>(take), touched.end(), before);

  out.entries.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const StoredFields& s = index.stored(touched[i]);
    ScoredDoc hit;
    hit.doc_id = s.id;
    hit.score = acc[touched[i]];
    hit.url = s.url;
    hit.title = s.title;
    if (options.include_body) hit.body = s.body;
    out.entries.push_back(std::move(hit));
  }
  return out;
}

const StoredFields& get_stored(const LexicalIndex& index, std::string_view doc_id) {
  if (!index.committed()) throw Error(Errc::not_committed, "lookup on a building index");
  auto ord = index.ordinal(doc_id);
  if (!ord) throw Error(Errc::not_found, std::string(doc_id));
  return index.stored(*ord);
}

}  // namespace shardsearch
