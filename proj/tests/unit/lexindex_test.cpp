#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "fixtures.hpp"
#include "shardsearch/analyzer.hpp"
#include "shardsearch/error.hpp"
#include "shardsearch/lexical_index.hpp"

using namespace shardsearch;
namespace st = shardsearch::testing;

namespace {

std::vector<Document> toy_corpus() {
  return {{"d1", 0, "", "", "san diego history"},
          {"d2", 0, "", "", "san francisco bay"},
          {"d3", 0, "", "", "history of utah settlement"}};
}

// Hand evaluation of the scoring formula for the toy corpus.
double hand_score(double tf, double df, double n, double dl, double avgdl) {
  const double k1 = 0.9, b = 0.4;
  const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
  return idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl));
}

}  // namespace

TEST(Analyzer, Examples) {
  EXPECT_EQ(analyze("San Diego's history"), (std::vector<std::string>{"san", "diego", "s", "history"}));
  EXPECT_TRUE(analyze("").empty());
  EXPECT_EQ(analyze("BM25 2022"), (std::vector<std::string>{"bm25", "2022"}));
}

TEST(Analyzer, UnicodeAndInvalidBytes) {
  EXPECT_EQ(analyze("ÉCOLE naïve—Zürich"), (std::vector<std::string>{"école", "naïve", "zürich"}));
  EXPECT_EQ(analyze("ab\xff" "cd"), (std::vector<std::string>{"ab", "cd"}));
  EXPECT_TRUE(analyze(" \t--!! ").empty());
}

TEST(Bm25, TermScoreFixtures) {
  const Bm25Params p;
  EXPECT_EQ(bm25_term_score(0, 2, 3, 3, 10.0 / 3, p), 0.0);
  EXPECT_NEAR(bm25_term_score(1, 2, 3, 3, 10.0 / 3, p), 0.4791, 1e-4);
  EXPECT_NEAR(bm25_term_score(1, 2, 3, 4, 10.0 / 3, p), 0.4528, 1e-4);
  EXPECT_NEAR(bm25_term_score(1, 2, 3, 3, 10.0 / 3, p), hand_score(1, 2, 3, 3, 10.0 / 3), 1e-12);
}

TEST(Bm25, InvalidStats) {
  const Bm25Params p;
  EXPECT_THROW(bm25_term_score(1, 4, 3, 3, 1.0, p), Error);
  EXPECT_THROW(bm25_term_score(1, 1, 3, 3, 0.0, p), Error);
  EXPECT_THROW(bm25_term_score(1, 0, 3, 3, 1.0, p), Error);
  EXPECT_THROW(Bm25Params({0.0, 0.4}).validate(), Error);
  EXPECT_THROW(Bm25Params({0.9, 1.5}).validate(), Error);
}

TEST(Bm25, MonotoneInTfAndDf) {
  const Bm25Params p;
  for (std::uint64_t tf = 1; tf < 30; ++tf) {
    EXPECT_GT(bm25_term_score(tf + 1, 5, 100, 20, 15.0, p), bm25_term_score(tf, 5, 100, 20, 15.0, p));
  }
  for (std::uint64_t df = 1; df < 100; ++df) {
    EXPECT_LT(bm25_term_score(2, df + 1, 100, 20, 15.0, p), bm25_term_score(2, df, 100, 20, 15.0, p));
    EXPECT_GT(bm25_idf(df, 100), 0.0);
  }
}

TEST(LexicalIndex, ToyCorpusStats) {
  const auto docs = toy_corpus();
  const auto index = build_index(docs);
  const auto s = index.field_stats(Field::body);
  EXPECT_EQ(s.doc_count, 3u);
  EXPECT_EQ(s.total_tokens, 10u);
  EXPECT_DOUBLE_EQ(s.avgdl(), 10.0 / 3);
  EXPECT_EQ(index.doc_freq("san", Field::body), 2u);
  EXPECT_EQ(index.doc_freq("zzz", Field::body), 0u);
}

TEST(LexicalIndex, ToyCorpusSearch) {
  const auto index = build_index(toy_corpus());
  const auto r = search_lexical(index, "san history", 10);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r.entries[0].doc_id, "d1");
  EXPECT_EQ(r.entries[1].doc_id, "d2");
  EXPECT_EQ(r.entries[2].doc_id, "d3");
  EXPECT_NEAR(r.entries[0].score, 0.9582, 1e-4);
  EXPECT_NEAR(r.entries[1].score, 0.4791, 1e-4);
  EXPECT_NEAR(r.entries[2].score, 0.4528, 1e-4);
  EXPECT_NEAR(r.entries[0].score, 2 * hand_score(1, 2, 3, 3, 10.0 / 3), 1e-12);

  const auto top1 = search_lexical(index, "san history", 1);
  ASSERT_EQ(top1.size(), 1u);
  EXPECT_EQ(top1.entries[0].doc_id, "d1");
  EXPECT_TRUE(search_lexical(index, "zzz", 10).empty());
  EXPECT_TRUE(search_lexical(index, "san", 0).empty());
}

TEST(LexicalIndex, RepeatedQueryTokenCountsTwice) {
  const auto index = build_index(toy_corpus());
  const auto once = search_lexical(index, "bay", 1);
  const auto twice = search_lexical(index, "bay bay", 1);
  EXPECT_DOUBLE_EQ(twice.entries[0].score, 2 * once.entries[0].score);
}

TEST(LexicalIndex, EmptyAndLifecycle) {
  LexicalIndex empty;
  EXPECT_THROW(search_lexical(empty, "x", 1), Error);
  empty.commit();
  EXPECT_EQ(empty.field_stats(Field::body).doc_count, 0u);
  EXPECT_TRUE(search_lexical(empty, "x", 10).empty());
  EXPECT_THROW(empty.add({"a", 0, "", "", "x"}), Error);

  LexicalIndex dup;
  dup.add({"d1", 0, "", "", "a"});
  try {
    dup.add({"d1", 0, "", "", "b"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::duplicate_doc_id);
  }
}

TEST(LexicalIndex, StoredFieldsRoundTrip) {
  std::vector<Document> docs{{"d1", 4, "https://ex.org/ä", "Tïtle 日本", "körper 本文 \xF0\x9F\x98\x80"}};
  const auto index = build_index(docs);
  const auto& s = get_stored(index, "d1");
  EXPECT_EQ(s.url, docs[0].url);
  EXPECT_EQ(s.title, docs[0].title);
  EXPECT_EQ(s.body, docs[0].body);
  EXPECT_EQ(s.segment, 4);
  try {
    get_stored(index, "missing");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::not_found);
  }
}

TEST(LexicalIndex, FieldsAreIndependent) {
  std::vector<Document> docs{{"a", 0, "http://utah.gov", "Utah", "nothing here"},
                             {"b", 0, "http://x.org", "other", "utah utah"}};
  const auto index = build_index(docs);
  EXPECT_EQ(search_lexical(index, "utah", 10, Field::title).entries.at(0).doc_id, "a");
  EXPECT_EQ(search_lexical(index, "utah", 10, Field::url).entries.at(0).doc_id, "a");
  const auto body = search_lexical(index, "utah", 10, Field::body);
  ASSERT_EQ(body.size(), 1u);
  EXPECT_EQ(body.entries[0].doc_id, "b");
  EXPECT_EQ(body.entries[0].url, "http://x.org");
  EXPECT_FALSE(body.entries[0].body.has_value());
  LexicalQueryOptions with_body{.include_body = true};
  EXPECT_EQ(search_lexical(index, "utah", 10, with_body).entries[0].body, "utah utah");
}

TEST(LexicalIndex, MatchesBruteForceOracle) {
  const auto docs = st::synthetic_corpus(300, 80, 11);
  const auto index = build_index(docs);
  for (const auto& q : st::random_queries(60, 90, 12)) {
    const auto got = search_lexical(index, q, 50);
    const auto want = st::brute_force_bm25(docs, q, 50);
    ASSERT_EQ(got.size(), want.size()) << q;
    for (std::size_t i = 0; i < want.size(); ++i) {
      EXPECT_EQ(got.entries[i].doc_id, want[i].id) << q << " rank " << i;
      EXPECT_NEAR(got.entries[i].score, want[i].score, 1e-9);
    }
    EXPECT_TRUE(is_well_ordered(got));
  }
}

TEST(LexicalIndex, GlobalStatsOverrideLocal) {
  const auto docs = toy_corpus();
  const auto index = build_index(docs);
  CollectionStats global{30, 100, {{"san", 2}, {"history", 2}}};
  LexicalQueryOptions opts{.global_stats = &global};
  const auto r = search_lexical(index, "san history", 10, opts);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_NEAR(r.entries[0].score, 2 * hand_score(1, 2, 30, 3, 100.0 / 30), 1e-12);

  CollectionStats missing{30, 100, {{"san", 2}}};
  opts.global_stats = &missing;
  EXPECT_THROW(search_lexical(index, "san history", 10, opts), Error);
}

TEST(LexicalSnapshot, RoundTrip) {
  st::TempDir dir;
  const auto docs = st::synthetic_corpus(200, 60, 3);
  const auto index = build_index(docs, {1.2, 0.75});
  index.save(dir / "x.idx");
  const auto loaded = LexicalIndex::load(dir / "x.idx");
  EXPECT_EQ(loaded.params().k1, 1.2);
  EXPECT_EQ(loaded.params().b, 0.75);
  EXPECT_EQ(loaded.doc_count(), index.doc_count());
  for (Field f : {Field::url, Field::title, Field::body}) {
    EXPECT_EQ(loaded.field_stats(f).total_tokens, index.field_stats(f).total_tokens);
    EXPECT_EQ(loaded.vocabulary_size(f), index.vocabulary_size(f));
  }
  for (const auto& q : st::random_queries(30, 60, 4)) {
    const auto a = search_lexical(index, q, 20);
    const auto b = search_lexical(loaded, q, 20);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a.entries[i].doc_id, b.entries[i].doc_id);
      EXPECT_EQ(a.entries[i].score, b.entries[i].score);
    }
  }
  EXPECT_EQ(get_stored(loaded, "doc7").body, docs[7].body);
}

TEST(LexicalSnapshot, CorruptionDetected) {
  st::TempDir dir;
  build_index(toy_corpus()).save(dir / "x.idx");
  std::string bytes;
  {
    std::ifstream in(dir / "x.idx", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  EXPECT_EQ(static_cast<unsigned char>(bytes[0]), LexicalIndex::kSnapshotVersion);
  const auto expect_corrupt = [&](const std::string& content) {
    std::ofstream(dir / "bad.idx", std::ios::binary | std::ios::trunc) << content;
    try {
      LexicalIndex::load(dir / "bad.idx");
      ADD_FAILURE() << "load accepted a damaged snapshot";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::corrupt_file) << e.what();
    }
  };
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  expect_corrupt(flipped);
  expect_corrupt(bytes.substr(0, bytes.size() - 7));
  std::string version = bytes;
  version[0] = 9;
  expect_corrupt(version);
  EXPECT_THROW(LexicalIndex::load(dir / "absent.idx"), Error);
}
