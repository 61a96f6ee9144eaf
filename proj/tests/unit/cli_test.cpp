#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "app_config.hpp"
#include "commands.hpp"
#include "fixtures.hpp"
#include "http_fixtures.hpp"
#include "shardsearch/error.hpp"
#include "shardsearch/evalkit.hpp"
#include "shardsearch/flat_index.hpp"
#include "shardsearch/lexical_index.hpp"

using namespace shardsearch;
namespace st = shardsearch::testing;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "shardsearch");
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  const int code = cli::run_command(args);
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_corpus(const fs::path& p, const std::vector<Document>& docs) {
  std::ofstream out(p);
  for (const auto& d : docs) out << serialize_document(d) << '\n';
}

}  // namespace

TEST(Cli, HelpExitsZeroForEverySubcommand) {
  EXPECT_EQ(run({"--help"}).code, 0);
  for (const char* sub : {"build-lexical", "build-dense", "merge-dense", "serve-shard", "serve-aggregator", "search",
                          "rerank", "gen-anchor-train", "gen-ranking-train", "eval", "bench-latency"}) {
    const auto r = run({sub, "--help"});
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find("--"), std::string::npos) << sub;
  }
}

TEST(Cli, UsageErrorsExitTwo) {
  const auto none = run({});
  EXPECT_EQ(none.code, 2);
  EXPECT_FALSE(none.err.empty());
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  const auto r = run({"eval", "--run", "x"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("qrels"), std::string::npos);
}

TEST(Cli, BadConfigNamesTheField) {
  st::TempDir dir;
  std::ofstream(dir / "c.toml") << "[bm25]\nk1 = -1.0\n";
  auto r = run({"--config", (dir / "c.toml").string(), "eval", "--run", "r", "--qrels", "q"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bm25.k1"), std::string::npos) << r.err;

  std::ofstream(dir / "u.json") << R"({"bm25":{"k3":1}})";
  r = run({"--config", (dir / "u.json").string(), "eval", "--run", "r", "--qrels", "q"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bm25.k3"), std::string::npos) << r.err;

  r = run({"build-lexical", "--corpus", "x.jsonl", "--k1", "0"});
  EXPECT_EQ(r.code, 2);
}

TEST(Cli, RuntimeErrorsExitOne) {
  st::TempDir dir;
  const auto r = run({"eval", "--run", (dir / "missing.trec").string(), "--qrels", (dir / "q").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("missing.trec"), std::string::npos);
}

TEST(AppConfig, PrecedenceFlagsEnvFileDefaults) {
  st::TempDir dir;
  std::ofstream(dir / "c.toml") << "[federation]\ndefault_k = 7\ntimeout_ms = 1234\n[sampling]\nseed = 9\n";
  const auto cfg = cli::load_app_config(dir / "c.toml");
  EXPECT_EQ(cfg.default_k, 7u);
  EXPECT_EQ(cfg.timeout_ms, 1234);
  EXPECT_EQ(cfg.sampling.rng_seed, 9u);
  EXPECT_EQ(cfg.bm25.k1, 0.9);
  EXPECT_NO_THROW(cfg.validate());

  std::ofstream(dir / "bad.toml") << "[federation\n";
  EXPECT_THROW(cli::load_app_config(dir / "bad.toml"), Error);
  std::ofstream(dir / "c.yaml") << "a: 1\n";
  EXPECT_THROW(cli::load_app_config(dir / "c.yaml"), Error);
}

TEST(Cli, BuildSearchEvalPipeline) {
  st::TempDir dir;
  auto docs = st::synthetic_corpus(240, 60, 21, 8);
  write_corpus(dir / "c.jsonl", docs);
  const std::string lex = (dir / "idx").string();

  auto r = run({"build-lexical", "--corpus", (dir / "c.jsonl").string(), "--partitions", "4", "--segments", "8",
                "--out", lex});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t total = 0;
  for (int p = 0; p < 4; ++p) {
    const auto part = fs::path(lex) / ("part-0" + std::to_string(p));
    ASSERT_TRUE(fs::exists(part / "lexical.idx"));
    const auto m = nlohmann::json::parse(slurp(part / "manifest.json"));
    EXPECT_EQ(m["first_segment"], 2 * p);
    EXPECT_EQ(m["last_segment"], 2 * p + 1);
    total += LexicalIndex::load(part / "lexical.idx").doc_count();
  }
  EXPECT_EQ(total, docs.size());

  // Rebuilding the same input yields byte-identical files.
  const auto before = slurp(fs::path(lex) / "part-02" / "lexical.idx");
  ASSERT_EQ(run({"build-lexical", "--corpus", (dir / "c.jsonl").string(), "--segments", "8", "--out", lex}).code, 0);
  EXPECT_EQ(slurp(fs::path(lex) / "part-02" / "lexical.idx"), before);

  // Single query, global stats, equals a monolithic index.
  r = run({"search", "--q", "w1 w5", "--k", "10", "--lexical-dir", lex, "--dense-dir", (dir / "none").string(),
           "--stats", "global"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto js = nlohmann::json::parse(r.out);
  const auto mono = build_index(docs);
  const auto want = search_lexical(mono, "w1 w5", 10);
  ASSERT_EQ(js["results"].size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(js["results"][i]["docid"], want.entries[i].doc_id);

  // Query file to run file, then eval against qrels.
  std::ofstream(dir / "queries.tsv") << "q1\tw1 w5\nq2\tw2 w9\n";
  {
    std::ofstream qrels(dir / "qrels.txt");
    qrels << "q1 0 " << want.entries[0].doc_id << " 1\n";
    qrels << "q2 0 doc0 1\n";
  }
  r = run({"search", "--queries", (dir / "queries.tsv").string(), "--k", "100", "--lexical-dir", lex, "--dense-dir",
           (dir / "none").string(), "--stats", "global", "--run-out", (dir / "run.trec").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto parsed = load_run(dir / "run.trec");
  EXPECT_EQ(parsed.size(), 2u);

  r = run({"eval", "--run", (dir / "run.trec").string(), "--qrels", (dir / "qrels.txt").string(), "--recall-cutoffs",
           "10,100", "--json-out", (dir / "report.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_EQ(report["queries"], 2);
  EXPECT_GE(report["mean"]["MRR"].get<double>(), 0.5);
  EXPECT_NE(r.out.find("Recall@10"), std::string::npos);
}

TEST(Cli, EnvironmentOverridesConfigAndFlagOverridesEnv) {
  st::TempDir dir;
  write_corpus(dir / "c.jsonl", st::synthetic_corpus(40, 20, 3, 4));
  std::ofstream(dir / "c.json") << R"({"index":{"lexical_dir":")" << (dir / "from-config").string() << R"("}})";
  ::setenv("SHARDSEARCH_OUT", (dir / "from-env").c_str(), 1);
  auto r = run({"--config", (dir / "c.json").string(), "build-lexical", "--corpus", (dir / "c.jsonl").string(),
                "--partitions", "2"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "from-env" / "part-01" / "lexical.idx"));
  EXPECT_FALSE(fs::exists(dir / "from-config"));
  r = run({"--config", (dir / "c.json").string(), "build-lexical", "--corpus", (dir / "c.jsonl").string(),
           "--partitions", "2", "--out", (dir / "from-flag").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "from-flag" / "part-00" / "lexical.idx"));
  ::unsetenv("SHARDSEARCH_OUT");
  r = run({"--config", (dir / "c.json").string(), "build-lexical", "--corpus", (dir / "c.jsonl").string(),
           "--partitions", "2"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "from-config" / "part-00" / "lexical.idx"));
}

TEST(Cli, DenseBuildPerSegmentThenMerge) {
  st::TempDir dir;
  const auto docs = st::synthetic_corpus(120, 30, 4, 10);
  write_corpus(dir / "c.jsonl", docs);
  const std::string dense = (dir / "dense").string();
  auto r = run({"build-dense", "--corpus", (dir / "c.jsonl").string(), "--dim", "16", "--per-segment", "--out", dense});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run({"merge-dense", "--segments-dir", dense + "/segments", "--partitions", "3", "--segments", "10", "--out",
           dense});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run({"build-dense", "--corpus", (dir / "c.jsonl").string(), "--dim", "16", "--partitions", "3", "--segments",
           "10", "--out", (dir / "direct").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* part : {"part-00", "part-01", "part-02"}) {
    const auto merged = load_dense(fs::path(dense) / part / "dense.fvi");
    const auto direct = load_dense(dir / "direct" / part / "dense.fvi");
    auto a = merged.ids();
    auto b = direct.ids();
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b) << part;
  }
  r = run({"search", "--q", "w1 w2", "--mode", "dense", "--dim", "16", "--k", "5", "--lexical-dir",
           (dir / "nolex").string(), "--dense-dir", dense});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["results"].size(), 5u);

  r = run({"merge-dense", "--in", dense + "/part-00/dense.fvi", dense + "/part-01/dense.fvi", "--out",
           (dir / "two.fvi").string()});
  ASSERT_EQ(r.code, 0) << r.err;
}

TEST(Cli, TrainingDataCommands) {
  st::TempDir dir;
  const auto docs = st::synthetic_corpus(150, 30, 31, 4);
  write_corpus(dir / "c.jsonl", docs);
  const std::string lex = (dir / "idx").string();
  ASSERT_EQ(run({"build-lexical", "--corpus", (dir / "c.jsonl").string(), "--partitions", "2", "--out", lex}).code, 0);
  std::ofstream(dir / "anchors.tsv") << "doc1\tw1 w2\ndoc2\tw3\nnot-there\tw1\nbad line\n";
  auto r = run({"gen-anchor-train", "--anchors", (dir / "anchors.tsv").string(), "--out",
                (dir / "anchor.jsonl").string(), "--lexical-dir", lex, "--dense-dir", (dir / "x").string(),
                "--with-text"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(slurp(dir / "anchor.jsonl"));
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("positive_text"));
    ++n;
  }
  EXPECT_EQ(n, 2);

  {
    std::ofstream q(dir / "qrels.txt");
    q << "qa 0 p1 1\nqa 0 p2 1\nqb 0 x 1\n";
    std::ofstream run_file(dir / "rank.trec");
    for (int i = 0; i < 120; ++i) run_file << "qa Q0 d" << i << " " << (i + 1) << " " << (200 - i) << " t\n";
  }
  const std::vector<std::string> args{"gen-ranking-train", "--qrels", (dir / "qrels.txt").string(), "--ranking",
                                      (dir / "rank.trec").string(), "--seed", "5"};
  auto a = args;
  a.insert(a.end(), {"--out", (dir / "r1.jsonl").string()});
  auto b = args;
  b.insert(b.end(), {"--out", (dir / "r2.jsonl").string()});
  ASSERT_EQ(run(a).code, 0);
  ASSERT_EQ(run(b).code, 0);
  EXPECT_EQ(slurp(dir / "r1.jsonl"), slurp(dir / "r2.jsonl"));
  EXPECT_FALSE(slurp(dir / "r1.jsonl").empty());
}

TEST(Cli, ServedAggregatorRoundTrip) {
  const auto docs = st::synthetic_corpus(100, 30, 2, 2);
  auto enc = std::make_shared<HashingEncoder>(EmbeddingSpec{768, 512});
  std::vector<std::unique_ptr<st::Running<ShardService>>> shards;
  std::vector<std::shared_ptr<ShardClient>> clients;
  for (int p = 0; p < 2; ++p) {
    std::vector<Document> part;
    auto dense = std::make_shared<FlatVectorIndex>(768);
    for (const auto& d : docs) {
      if (d.segment != p) continue;
      part.push_back(d);
      add_vector(*dense, d.id, enc->embed_one(dense_text(d.title, d.body)));
    }
    shards.push_back(std::make_unique<st::Running<ShardService>>(std::make_shared<LocalShard>(
        "p", std::make_shared<const LexicalIndex>(build_index(part)), std::move(dense), enc)));
    clients.push_back(std::make_shared<HttpShard>(shards.back()->url()));
  }
  st::Running<AggregatorService> agg(std::make_shared<Federation>(clients), AggregatorOptions{});
  auto r = run({"search", "--q", "san history", "--k", "10", "--mode", "dense", "--aggregator", agg.url()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["results"].size(), 10u);

  r = run({"rerank", "--q", "w1 w2", "--depth", "40", "--output", "5", "--aggregator", agg.url()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["results"].size(), 5u);

  st::TempDir dir;
  std::ofstream(dir / "q.tsv") << "a\tw1\nb\tw2 w3\n";
  r = run({"bench-latency", "--queries", (dir / "q.tsv").string(), "--repeat", "3", "--aggregator", agg.url()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["samples"], 6);
}
