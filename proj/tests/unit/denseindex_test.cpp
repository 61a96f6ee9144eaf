#include <gtest/gtest.h>

#include <fstream>
#include <limits>

#include "fixtures.hpp"
#include "shardsearch/encoder.hpp"
#include "shardsearch/error.hpp"
#include "shardsearch/flat_index.hpp"

using namespace shardsearch;
namespace st = shardsearch::testing;

namespace {

FlatVectorIndex index_from(const Eigen::MatrixXf& m, const std::vector<std::string>& ids) {
  FlatVectorIndex idx(m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) add_vector(idx, ids[static_cast<std::size_t>(r)], m.row(r).transpose());
  return idx;
}

std::vector<std::string> make_ids(std::size_t n, const std::string& prefix = "v") {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i));
  return ids;
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::invalid_args;
}

}  // namespace

TEST(FlatIndex, AddAndReject) {
  FlatVectorIndex idx(768);
  add_vector(idx, "a", Eigen::VectorXf::Ones(768));
  EXPECT_EQ(idx.size(), 1);
  EXPECT_EQ(code_of([&] { add_vector(idx, "b", Eigen::VectorXf::Ones(512)); }), Errc::dimension_mismatch);
  EXPECT_EQ(code_of([&] { add_vector(idx, "a", Eigen::VectorXf::Zero(768)); }), Errc::duplicate_id);
  Eigen::VectorXf bad = Eigen::VectorXf::Zero(768);
  bad[3] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_EQ(code_of([&] { add_vector(idx, "c", bad); }), Errc::non_finite_value);
  bad[3] = std::numeric_limits<float>::infinity();
  EXPECT_EQ(code_of([&] { add_vector(idx, "c", bad); }), Errc::non_finite_value);
  EXPECT_EQ(idx.size(), 1);
  EXPECT_EQ(code_of([] { FlatVectorIndex(0); }), Errc::invalid_args);
}

TEST(FlatIndex, HandExample) {
  FlatVectorIndex idx(2);
  add_vector(idx, "v1", Eigen::Vector2f(1, 0));
  add_vector(idx, "v2", Eigen::Vector2f(0, 1));
  add_vector(idx, "v3", Eigen::Vector2f(0.6f, 0.8f));
  const auto r = search_dense(idx, Eigen::Vector2f(0.8f, 0.6f), 3);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r.entries[0].doc_id, "v3");
  EXPECT_EQ(r.entries[1].doc_id, "v1");
  EXPECT_EQ(r.entries[2].doc_id, "v2");
  EXPECT_NEAR(r.entries[0].score, 0.96, 1e-6);
  EXPECT_NEAR(r.entries[1].score, 0.80, 1e-6);
  EXPECT_NEAR(r.entries[2].score, 0.60, 1e-6);
  EXPECT_TRUE(search_dense(idx, Eigen::Vector2f(1, 1), 0).empty());
  EXPECT_EQ(search_dense(idx, Eigen::Vector2f(1, 1), 99).size(), 3u);
  EXPECT_EQ(code_of([&] { search_dense(idx, Eigen::Vector3f(1, 1, 1), 1); }), Errc::dimension_mismatch);
}

TEST(FlatIndex, TiesBreakById) {
  FlatVectorIndex idx(2);
  add_vector(idx, "b", Eigen::Vector2f(1, 0));
  add_vector(idx, "a", Eigen::Vector2f(1, 0));
  add_vector(idx, "c", Eigen::Vector2f(1, 0));
  const auto r = search_dense(idx, Eigen::Vector2f(2, 0), 3);
  EXPECT_EQ(r.entries[0].doc_id, "a");
  EXPECT_EQ(r.entries[1].doc_id, "b");
  EXPECT_EQ(r.entries[2].doc_id, "c");
}

TEST(FlatIndex, UnitVectorFindsItself) {
  Eigen::MatrixXf m = st::random_matrix(200, 16, 5);
  m.rowwise().normalize();
  const auto ids = make_ids(200);
  const auto idx = index_from(m, ids);
  for (Eigen::Index r = 0; r < 200; r += 17) {
    EXPECT_EQ(search_dense(idx, Eigen::VectorXf(m.row(r).transpose()), 1).entries.at(0).doc_id,
              ids[static_cast<std::size_t>(r)]);
  }
}

TEST(FlatIndex, MatchesBruteForce) {
  const auto m = st::random_matrix(1500, 24, 8);
  const auto ids = make_ids(1500);
  const auto idx = index_from(m, ids);
  const auto queries = st::random_matrix(20, 24, 9);
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    const Eigen::VectorXf qv = queries.row(q).transpose();
    const auto got = search_dense(idx, qv, 300);
    const auto want = st::brute_force_dense(m, ids, qv, 300);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      ASSERT_EQ(got.entries[i].doc_id, want[i].id);
      ASSERT_EQ(got.entries[i].score, want[i].score);
    }
  }
}

TEST(FlatIndex, DoubleScalarWorks) {
  BasicFlatIndex<double> idx(3);
  add_vector(idx, "x", Eigen::Vector3d(1, 2, 3));
  add_vector(idx, "y", Eigen::Vector3d(3, 2, 1));
  const auto r = search_dense(idx, Eigen::Vector3d(1, 0, 0), 2);
  EXPECT_EQ(r.entries[0].doc_id, "y");
  EXPECT_EQ(r.entries[0].score, 3.0);
  EXPECT_EQ(idx.vectors()(1, 2), 1.0);
}

TEST(MergeDense, EmptyWithDim) {
  const auto merged = merge_dense<float>(std::span<const FlatVectorIndex>{}, 8);
  EXPECT_EQ(merged.size(), 0);
  EXPECT_EQ(merged.dim(), 8);
}

TEST(MergeDense, EqualsConcatenation) {
  const auto m = st::random_matrix(300, 12, 21);
  const auto ids = make_ids(300);
  std::vector<FlatVectorIndex> parts;
  parts.push_back(index_from(m.topRows(120), std::vector<std::string>(ids.begin(), ids.begin() + 120)));
  parts.push_back(index_from(m.bottomRows(180), std::vector<std::string>(ids.begin() + 120, ids.end())));
  const auto merged = merge_dense<float>(parts);
  const auto whole = index_from(m, ids);
  EXPECT_EQ(merged.ids(), whole.ids());
  EXPECT_TRUE(merged.vectors() == whole.vectors());
  const auto qs = st::random_matrix(10, 12, 22);
  for (Eigen::Index q = 0; q < qs.rows(); ++q) {
    const Eigen::VectorXf qv = qs.row(q).transpose();
    const auto a = search_dense(merged, qv, 50);
    const auto b = search_dense(whole, qv, 50);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.entries[i].doc_id, b.entries[i].doc_id);
  }
}

TEST(MergeDense, Rejections) {
  std::vector<FlatVectorIndex> parts;
  parts.emplace_back(2);
  parts.emplace_back(2);
  add_vector(parts[0], "d7", Eigen::Vector2f(1, 2));
  add_vector(parts[1], "d7", Eigen::Vector2f(3, 4));
  EXPECT_EQ(code_of([&] { merge_dense<float>(parts); }), Errc::duplicate_id);
  parts.emplace_back(3);
  EXPECT_EQ(code_of([&] { merge_dense<float>(std::span<const FlatVectorIndex>(parts).subspan(1)); }),
            Errc::dimension_mismatch);
  EXPECT_EQ(code_of([] { merge_dense<float>(std::span<const FlatVectorIndex>{}); }), Errc::invalid_args);
}

TEST(PersistDense, RoundTrip) {
  st::TempDir dir;
  const auto m = st::random_matrix(500, 32, 31);
  auto ids = make_ids(500);
  ids[3] = "ünïcode-id";
  const auto idx = index_from(m, ids);
  persist_dense(idx, dir / "sub" / "x.fvi");
  const auto loaded = load_dense(dir / "sub" / "x.fvi");
  EXPECT_EQ(loaded.ids(), idx.ids());
  EXPECT_TRUE(loaded.vectors() == idx.vectors());
  EXPECT_EQ(std::filesystem::file_size(dir / "sub" / "x.fvi"),
            16u + [&] {
              std::size_t n = 0;
              for (const auto& id : ids) n += 4 + id.size();
              return n;
            }() + 500u * 32u * 4u + 4u);
  const auto qs = st::random_matrix(100, 32, 32);
  for (Eigen::Index q = 0; q < qs.rows(); ++q) {
    const Eigen::VectorXf qv = qs.row(q).transpose();
    const auto a = search_dense(idx, qv, 10);
    const auto b = search_dense(loaded, qv, 10);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a.entries[i].doc_id, b.entries[i].doc_id);
      EXPECT_EQ(a.entries[i].score, b.entries[i].score);
    }
  }
}

TEST(PersistDense, CorruptFiles) {
  st::TempDir dir;
  const auto idx = index_from(st::random_matrix(10, 4, 1), make_ids(10));
  persist_dense(idx, dir / "ok.fvi");
  std::string bytes;
  {
    std::ifstream in(dir / "ok.fvi", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  ASSERT_EQ(bytes.substr(0, 4), "FVI1");
  const auto expect_corrupt = [&](const std::string& content, const char* what) {
    std::ofstream(dir / "bad.fvi", std::ios::binary | std::ios::trunc) << content;
    EXPECT_EQ(code_of([&] { load_dense(dir / "bad.fvi"); }), Errc::corrupt_file) << what;
  };
  std::string magic = bytes;
  magic[0] = 'X';
  expect_corrupt(magic, "magic");
  expect_corrupt(bytes.substr(0, bytes.size() - 20), "truncated");
  std::string extra = bytes;
  extra.insert(bytes.size() - 4, "\0\0\0\0", 4);
  expect_corrupt(extra, "payload longer than count*dim*4");
  std::string flipped = bytes;
  flipped[bytes.size() - 10] ^= 1;
  expect_corrupt(flipped, "checksum");
  expect_corrupt(bytes.substr(0, 6), "short header");
  EXPECT_EQ(code_of([&] { load_dense(dir / "missing.fvi"); }), Errc::io_error);
}

TEST(HashingEncoder, DeterministicAndTruncates) {
  HashingEncoder enc({64, 4});
  const auto a = enc.embed_one("alpha beta gamma delta");
  const auto b = enc.embed_one("alpha beta gamma delta epsilon zeta");
  EXPECT_EQ(a.size(), 64);
  EXPECT_TRUE(a == b);
  EXPECT_TRUE(enc.embed_one("") == Eigen::VectorXf::Zero(64));
  const std::vector<std::string> texts{"same text", "same text"};
  const auto v = enc.embed(texts);
  EXPECT_TRUE(v[0] == v[1]);
  EXPECT_TRUE(v[0].allFinite());
  EXPECT_EQ(dense_text("T", "B"), "T\nB");
}
