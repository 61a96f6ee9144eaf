#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "shardsearch/document.hpp"
#include "shardsearch/ranked_list.hpp"

namespace shardsearch {

enum class Field : std::uint8_t { url = 0, title = 1, body = 2 };
inline constexpr std::size_t kFieldCount = 3;

std::string_view to_string(Field field) noexcept;
/// Throws Error{invalid_args} for anything but "url", "title", "body".
Field parse_field(std::string_view name);

/// Okapi BM25 free parameters.
struct Bm25Params {
  double k1 = 0.9;
  double b = 0.4;

  /// Throws Error{invalid_args} unless k1 > 0 and 0 <= b <= 1.
  void validate() const;
};

/// ln(1 + (N - df + 0.5) / (df + 0.5)); strictly positive for df <= N.
double bm25_idf(std::uint64_t df, std::uint64_t doc_count);

/// idf(df, N) * tf*(k1+1) / (tf + k1*(1 - b + b*dl/avgdl)). Zero when tf == 0.
///
/// Throws Error{invalid_stats} when df > N, df == 0 with tf > 0, or avgdl <= 0.
double bm25_term_score(std::uint64_t tf, std::uint64_t df, std::uint64_t doc_count, std::uint64_t doc_length,
                       double avgdl, const Bm25Params& params);

struct FieldStats {
  Field field = Field::body;
  std::uint64_t doc_count = 0;
  std::uint64_t total_tokens = 0;

  double avgdl() const noexcept {
    return doc_count == 0 ? 0.0 : static_cast<double>(total_tokens) / static_cast<double>(doc_count);
  }
};

/// Corpus-wide statistics for one field, assembled across shards so that each
/// shard scores as if it held the whole collection. `doc_freqs` must cover
/// every query term that occurs in the shard.
struct CollectionStats {
  std::uint64_t doc_count = 0;
  std::uint64_t total_tokens = 0;
  std::unordered_map<std::string, std::uint64_t> doc_freqs;
};

struct Posting {
  std::uint32_t doc = 0;  // ordinal in insertion order
  std::uint32_t tf = 0;

  friend bool operator==(const Posting&, const Posting&) = default;
};

struct StoredFields {
  std::string id;
  std::int64_t segment = 0;
  std::string url;
  std::string title;
  std::string body;
};

/// Multi-field inverted index with stored fields.
///
/// Documents are added while Building; `commit()` freezes the index and
/// computes per-field statistics. Afterwards it is immutable and safe to share
/// among concurrent readers.
class LexicalIndex {
 public:
  enum class State { building, committed };

  explicit LexicalIndex(Bm25Params params = {});

  /// Throws Error{duplicate_doc_id}, or Error{invalid_args} once committed.
  void add(const Document& doc);
  void commit();

  State state() const noexcept { return state_; }
  bool committed() const noexcept { return state_ == State::committed; }
  const Bm25Params& params() const noexcept { return params_; }

  std::size_t doc_count() const noexcept { return stored_.size(); }
  FieldStats field_stats(Field field) const;
  std::uint64_t doc_freq(std::string_view term, Field field) const;
  std::span<const Posting> postings(std::string_view term, Field field) const;
  std::uint32_t doc_length(std::uint32_t ordinal, Field field) const { return fields_[idx(field)].lengths[ordinal]; }
  std::size_t vocabulary_size(Field field) const { return fields_[idx(field)].terms.size(); }

  const StoredFields& stored(std::uint32_t ordinal) const { return stored_[ordinal]; }
  std::optional<std::uint32_t> ordinal(std::string_view doc_id) const;
  bool contains(std::string_view doc_id) const { return ordinal(doc_id).has_value(); }

  /// Single-file snapshot: version byte at offset 0, CRC32 trailer.
  void save(const std::filesystem::path& path) const;
  /// Throws Error{io_error | corrupt_file}.
  static LexicalIndex load(const std::filesystem::path& path);

  static constexpr std::uint8_t kSnapshotVersion = 1;

 private:
  struct FieldIndex {
    std::unordered_map<std::string, std::uint32_t> terms;
    std::vector<std::vector<Posting>> postings;
    std::vector<std::uint32_t> lengths;
    std::uint64_t total_tokens = 0;
  };

  static std::size_t idx(Field f) noexcept { return static_cast<std::size_t>(f); }
  void require_committed() const;

  Bm25Params params_;
  State state_ = State::building;
  std::vector<StoredFields> stored_;
  std::unordered_map<std::string, std::uint32_t> ordinals_;
  FieldIndex fields_[kFieldCount];
};

/// Builds and commits an index from a document sequence.
LexicalIndex build_index(std::span<const Document> docs, Bm25Params params = {});

struct LexicalQueryOptions {
  Field field = Field::body;
  bool include_body = false;
  /// When set, scores use these corpus-wide statistics instead of local ones.
  const CollectionStats* global_stats = nullptr;
};

/// Top-k documents by summed BM25 over every analyzed query token occurrence.
/// Each hit carries its stored url and title. Throws Error{not_committed}.
RankedList search_lexical(const LexicalIndex& index, std::string_view query, std::size_t k,
                          const LexicalQueryOptions& options);

inline RankedList search_lexical(const LexicalIndex& index, std::string_view query, std::size_t k,
                                 Field field = Field::body) {
  return search_lexical(index, query, k, LexicalQueryOptions{.field = field});
}

/// Throws Error{not_found | not_committed}.
const StoredFields& get_stored(const LexicalIndex& index, std::string_view doc_id);

}  // namespace shardsearch
