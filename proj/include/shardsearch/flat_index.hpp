#pragma once

// Flat dense-vector index: fixed-width rows searched exhaustively by inner
// product. Scalar-generic; persistence is defined for float32 only.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "shardsearch/error.hpp"
#include "shardsearch/ranked_list.hpp"

namespace shardsearch {

template <typename Scalar>
class BasicFlatIndex {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  explicit BasicFlatIndex(Eigen::Index dim) : dim_(dim) {
    if (dim <= 0) throw Error(Errc::invalid_args, "dim must be > 0");
  }

  Eigen::Index dim() const noexcept { return dim_; }
  Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(ids_.size()); }
  bool empty() const noexcept { return ids_.empty(); }

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::string& id(Eigen::Index row) const { return ids_[static_cast<std::size_t>(row)]; }
  bool contains(const std::string& id) const { return rows_.count(id) != 0; }

  /// Row-major view of every stored vector, in insertion order.
  Eigen::Map<const RowMatrix> vectors() const { return {data_.data(), size(), dim_}; }
  Eigen::Map<const Vector> row(Eigen::Index r) const { return {data_.data() + r * dim_, dim_}; }
  std::span<const Scalar> raw() const noexcept { return data_; }

  void reserve(Eigen::Index count) {
    ids_.reserve(static_cast<std::size_t>(count));
    data_.reserve(static_cast<std::size_t>(count * dim_));
  }

  /// Appends one row. Throws Error{dimension_mismatch | duplicate_id | non_finite_value}.
  void append(std::string id, std::span<const Scalar> values) {
    if (static_cast<Eigen::Index>(values.size()) != dim_) {
      throw Error(Errc::dimension_mismatch,
                  "vector has " + std::to_string(values.size()) + " components, index dim is " + std::to_string(dim_));
    }
    for (Scalar v : values) {
      if (!std::isfinite(v)) throw Error(Errc::non_finite_value, "vector for '" + id + "'");
    }
    if (!rows_.emplace(id, ids_.size()).second) throw Error(Errc::duplicate_id, id);
    ids_.push_back(std::move(id));
    data_.insert(data_.end(), values.begin(), values.end());
  }

 private:
  Eigen::Index dim_;
  std::vector<std::string> ids_;
  std::vector<Scalar> data_;
  std::unordered_map<std::string, std::size_t> rows_;
};

using FlatVectorIndex = BasicFlatIndex<float>;

/// Sum of a[i]*b[i] accumulated strictly left to right in Scalar precision.
template <typename Scalar>
Scalar dot_sequential(const Scalar* a, const Scalar* b, Eigen::Index n) noexcept {
  Scalar acc(0);
  for (Eigen::Index i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename Derived>
void add_vector(BasicFlatIndex<typename Derived::Scalar>& index, std::string doc_id,
                const Eigen::MatrixBase<Derived>& vector) {
  const typename BasicFlatIndex<typename Derived::Scalar>::Vector v = vector;
  index.append(std::move(doc_id), std::span<const typename Derived::Scalar>(v.data(), static_cast<std::size_t>(v.size())));
}

/// Exact top-k by inner product, ties by doc id. k larger than the index
/// returns every entry. Throws Error{dimension_mismatch}.
template <typename Scalar, typename Derived>
RankedList search_dense(const BasicFlatIndex<Scalar>& index, const Eigen::MatrixBase<Derived>& query, std::size_t k) {
  static_assert(std::is_same_v<Scalar, typename Derived::Scalar>, "query scalar must match the index");
  if (query.size() != index.dim()) {
    throw Error(Errc::dimension_mismatch,
                "query has " + std::to_string(query.size()) + " components, index dim is " + std::to_string(index.dim()));
  }
  RankedList out;
  const auto n = static_cast<std::size_t>(index.size());
  if (k == 0 || n == 0) return out;

  const typename BasicFlatIndex<Scalar>::Vector q = query;
  const Scalar* rows = index.raw().data();
  std::vector<Scalar> scores(n);
  for (std::size_t r = 0; r < n; ++r) {
    scores[r] = dot_sequential(rows + static_cast<Eigen::Index>(r) * index.dim(), q.data(), index.dim());
  }

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  const auto& ids = index.ids();
  const std::size_t take = std::min(k, n);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return ids[a] < ids[b];
                    });
  out.entries.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    ScoredDoc hit;
    hit.doc_id = ids[order[i]];
    hit.score = static_cast<double>(scores[order[i]]);
    out.entries.push_back(std::move(hit));
  }
  return out;
}

/// Concatenates parts in order. Throws Error{dimension_mismatch | duplicate_id}.
template <typename Scalar>
BasicFlatIndex<Scalar> merge_dense(std::span<const BasicFlatIndex<Scalar>> parts, Eigen::Index dim) {
  BasicFlatIndex<Scalar> merged(dim);
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    if (p.dim() != dim) {
      throw Error(Errc::dimension_mismatch,
                  "part dim " + std::to_string(p.dim()) + " differs from " + std::to_string(dim));
    }
    total += p.size();
  }
  merged.reserve(total);
  for (const auto& p : parts) {
    const auto raw = p.raw();
    for (Eigen::Index r = 0; r < p.size(); ++r) {
      merged.append(p.id(r), raw.subspan(static_cast<std::size_t>(r * dim), static_cast<std::size_t>(dim)));
    }
  }
  return merged;
}

template <typename Scalar>
BasicFlatIndex<Scalar> merge_dense(std::span<const BasicFlatIndex<Scalar>> parts) {
  if (parts.empty()) throw Error(Errc::invalid_args, "merge of no parts needs an explicit dim");
  return merge_dense(parts, parts.front().dim());
}

/// `.fvi` layout, little-endian: "FVI1", u32 dim, u64 count, count ids as
/// (u32 byte length, UTF-8 bytes), count*dim float32 row-major, then the
/// CRC32 of everything between the 16-byte header and the trailer.
void persist_dense(const FlatVectorIndex& index, const std::filesystem::path& path);

/// Throws Error{io_error | corrupt_file}.
FlatVectorIndex load_dense(const std::filesystem::path& path);

}  // namespace shardsearch
