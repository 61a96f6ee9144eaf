#pragma once

// Synthetic corpora and brute-force reference implementations shared by the
// unit and acceptance tests. The oracles deliberately avoid the library's
// index structures: they rescan raw documents for every query.

#include <Eigen/Core>

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "shardsearch/document.hpp"
#include "shardsearch/federation.hpp"

namespace shardsearch::testing {

/// Vocabulary "w0".."w{n-1}" drawn with a Zipf-like skew so that document
/// frequencies vary widely and ties between scores are common.
inline std::vector<Document> synthetic_corpus(std::size_t docs, std::size_t vocab, std::uint64_t seed,
                                              std::int64_t segments = 8) {
  std::mt19937_64 rng(seed);
  std::vector<double> weights(vocab);
  for (std::size_t i = 0; i < vocab; ++i) weights[i] = 1.0 / static_cast<double>(i + 1);
  std::discrete_distribution<std::size_t> word(weights.begin(), weights.end());
  std::uniform_int_distribution<int> body_len(1, 40);
  std::uniform_int_distribution<int> title_len(0, 5);
  std::uniform_int_distribution<std::int64_t> seg(0, segments - 1);

  const auto text = [&](int n) {
    std::string s;
    for (int i = 0; i < n; ++i) {
      if (i) s.push_back(' ');
      s += "w" + std::to_string(word(rng));
    }
    return s;
  };
  std::vector<Document> out;
  out.reserve(docs);
  for (std::size_t d = 0; d < docs; ++d) {
    Document doc;
    doc.id = "doc" + std::to_string(d);
    doc.segment = seg(rng);
    doc.url = "http://example.org/" + std::to_string(d);
    doc.title = text(title_len(rng));
    doc.body = text(body_len(rng));
    out.push_back(std::move(doc));
  }
  return out;
}

inline std::vector<std::string> random_queries(std::size_t count, std::size_t vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> word(0, vocab - 1);
  std::uniform_int_distribution<int> len(1, 4);
  std::vector<std::string> out;
  for (std::size_t q = 0; q < count; ++q) {
    std::string s;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
      if (i) s.push_back(' ');
      s += "w" + std::to_string(word(rng));
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

struct OracleHit {
  std::string id;
  double score;
};

/// Okapi BM25 over whitespace tokens of lowercase ASCII text, recomputed
/// from scratch per query. Ordered by score desc, id asc; zero scores dropped.
inline std::vector<OracleHit> brute_force_bm25(const std::vector<Document>& docs, const std::string& query,
                                               std::size_t k, double k1 = 0.9, double b = 0.4) {
  std::vector<std::vector<std::string>> toks;
  double total = 0;
  for (const auto& d : docs) {
    toks.push_back(split_ws(d.body));
    total += static_cast<double>(toks.back().size());
  }
  const double n = static_cast<double>(docs.size());
  const double avgdl = total / n;
  std::vector<OracleHit> hits;
  const auto q = split_ws(query);
  std::map<std::string, double> dfs;
  for (const auto& term : q) {
    double df = 0;
    for (const auto& t : toks) df += std::find(t.begin(), t.end(), term) != t.end() ? 1 : 0;
    dfs[term] = df;
  }
  for (std::size_t i = 0; i < docs.size(); ++i) {
    double score = 0;
    bool matched = false;
    for (const auto& term : q) {
      const auto tf = static_cast<double>(std::count(toks[i].begin(), toks[i].end(), term));
      if (tf == 0) continue;
      const double df = dfs[term];
      const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
      const double dl = static_cast<double>(toks[i].size());
      score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl));
      matched = true;
    }
    if (matched) hits.push_back({docs[i].id, score});
  }
  std::sort(hits.begin(), hits.end(), [](const OracleHit& a, const OracleHit& b2) {
    if (a.score != b2.score) return a.score > b2.score;
    return a.id < b2.id;
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

/// Row-major random vectors in [-1, 1).
inline Eigen::MatrixXf random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Eigen::MatrixXf m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = u(rng);
  return m;
}

/// Exhaustive inner-product ranking with the same left-to-right float
/// accumulation as a naive loop; ties by id.
inline std::vector<OracleHit> brute_force_dense(const Eigen::MatrixXf& rows, const std::vector<std::string>& ids,
                                                const Eigen::VectorXf& q, std::size_t k) {
  std::vector<std::pair<float, std::size_t>> scored;
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    float acc = 0.0f;
    for (Eigen::Index c = 0; c < rows.cols(); ++c) acc += rows(r, c) * q[c];
    scored.emplace_back(acc, static_cast<std::size_t>(r));
  }
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return ids[a.second] < ids[b.second];
  });
  std::vector<OracleHit> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) {
    out.push_back({ids[scored[i].second], static_cast<double>(scored[i].first)});
  }
  return out;
}

/// Shard stub with a fixed answer, optional delay and optional failure.
class MockShard final : public ShardClient {
 public:
  MockShard(std::string name, RankedList answer, std::chrono::milliseconds delay = {}, bool fail = false)
      : name_(std::move(name)), answer_(std::move(answer)), delay_(delay), fail_(fail) {}

  std::string name() const override { return name_; }
  RankedList search(const ShardQuery&) override {
    if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
    if (fail_) throw std::runtime_error("shard down");
    return answer_;
  }
  FieldStats field_stats(Field field) override { return {field, 0, 0}; }
  std::unordered_map<std::string, std::uint64_t> doc_freqs(std::span<const std::string>, Field) override {
    return {};
  }
  std::optional<StoredFields> fetch(const std::string&) override { return std::nullopt; }

 private:
  std::string name_;
  RankedList answer_;
  std::chrono::milliseconds delay_;
  bool fail_;
};

inline RankedList ranked(std::vector<std::pair<std::string, double>> entries) {
  RankedList l;
  for (auto& [id, s] : entries) {
    ScoredDoc d;
    d.doc_id = id;
    d.score = s;
    l.entries.push_back(std::move(d));
  }
  return l;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("shardsearch-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace shardsearch::testing
