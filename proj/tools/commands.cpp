#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <csignal>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>

#include "app_config.hpp"
#include "http_util.hpp"
#include "shardsearch/document.hpp"
#include "shardsearch/error.hpp"
#include "shardsearch/evalkit.hpp"
#include "shardsearch/federation.hpp"
#include "shardsearch/flat_index.hpp"
#include "shardsearch/lexical_index.hpp"
#include "shardsearch/rerank.hpp"
#include "shardsearch/service.hpp"
#include "shardsearch/traingen.hpp"

namespace shardsearch::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

constexpr const char* kLexicalFile = "lexical.idx";
constexpr const char* kDenseFile = "dense.fvi";

void log(const std::string& msg) { std::cerr << "[shardsearch] " << msg << '\n'; }

// ---------------------------------------------------------------------------
// Flag layer: every config-backed flag lands in an optional so that unset
// flags fall through to the config file and then to defaults.

struct Overrides {
  std::optional<std::vector<std::string>> corpus;
  std::optional<std::int64_t> segments;
  std::optional<std::int64_t> partitions;
  std::optional<std::string> lexical_dir;
  std::optional<std::string> dense_dir;
  std::optional<std::vector<std::string>> shards;
  std::optional<std::string> aggregator;
  std::optional<std::int64_t> timeout_ms;
  std::optional<std::size_t> k;
  std::optional<std::string> stats;
  std::optional<double> k1;
  std::optional<double> b;
  std::optional<std::size_t> depth;
  std::optional<std::size_t> output;
  std::optional<std::size_t> scorer_batch;
  std::optional<std::string> scorer_url;
  std::optional<std::size_t> bm25_negatives;
  std::optional<std::size_t> pool_depth;
  std::optional<std::size_t> random_negatives;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::size_t>> recall_cutoffs;
  std::optional<std::vector<std::size_t>> precision_cutoffs;
  std::optional<std::size_t> mrr_depth;
  std::optional<int> dim;
  std::optional<int> max_tokens;
  std::optional<std::string> encoder;
  std::optional<std::string> embed_url;

  void apply(AppConfig& c) const {
    if (corpus) c.corpus_paths = *corpus;
    if (segments) c.num_segments = *segments;
    if (partitions) c.num_partitions = *partitions;
    if (lexical_dir) c.lexical_dir = *lexical_dir;
    if (dense_dir) c.dense_dir = *dense_dir;
    if (shards) c.shards = *shards;
    if (aggregator) c.aggregator = *aggregator;
    if (timeout_ms) c.timeout_ms = *timeout_ms;
    if (k) c.default_k = *k;
    if (stats) c.stats = *stats;
    if (k1) c.bm25.k1 = *k1;
    if (b) c.bm25.b = *b;
    if (depth) c.rerank.first_stage_depth = *depth;
    if (output) c.rerank.output_size = *output;
    if (scorer_batch) c.scorer_batch_size = *scorer_batch;
    if (scorer_url) c.scorer_url = *scorer_url;
    if (bm25_negatives) c.sampling.n_bm25_negatives = *bm25_negatives;
    if (pool_depth) c.sampling.pool_depth = *pool_depth;
    if (random_negatives) c.sampling.n_random_negatives = *random_negatives;
    if (seed) c.sampling.rng_seed = *seed;
    if (recall_cutoffs) c.cutoffs.recall = *recall_cutoffs;
    if (precision_cutoffs) c.cutoffs.precision = *precision_cutoffs;
    if (mrr_depth) c.cutoffs.mrr_depth = *mrr_depth;
    if (dim) c.embedding.dim = *dim;
    if (max_tokens) c.embedding.max_tokens = *max_tokens;
    if (encoder) c.encoder = *encoder;
    if (embed_url) c.embed_url = *embed_url;
  }
};

/// Non-config arguments of individual subcommands.
struct Args {
  std::string config;
  std::string q;
  std::string queries;
  std::string run_out;
  std::string mode = "lexical";
  std::string field = "body";
  std::string run;
  std::string qrels;
  std::string ranking;
  std::string anchors;
  std::string out;
  std::vector<std::string> inputs;
  std::string segments_dir;
  std::string vectors;
  std::string shard_dir;
  std::string lexical_index;
  std::string dense_index;
  std::string host = "127.0.0.1";
  int port = 0;
  std::string scorer = "builtin";
  std::string tag = "shardsearch";
  std::string json_out;
  std::size_t repeat = 1;
  bool with_text = false;
  bool per_segment = false;
  bool per_query = false;
};

std::string env_name(const std::string& flag) {
  std::string name = kEnvPrefix;
  for (char c : flag.substr(flag.find_first_not_of('-'))) {
    name.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return name;
}

template <typename T>
CLI::Option* config_flag(CLI::App* app, const std::string& flag, std::optional<T>& target, const std::string& desc) {
  auto* opt = app->add_option(flag, target, desc)->envname(env_name(flag));
  if constexpr (requires { typename T::value_type; } && !std::is_same_v<T, std::string>) opt->delimiter(',');
  return opt;
}

// ---------------------------------------------------------------------------
// Output helpers

ordered_json hit_json(const ScoredDoc& d) {
  ordered_json j;
  j["docid"] = d.doc_id;
  j["score"] = d.score;
  if (d.first_stage_score) j["first_stage_score"] = *d.first_stage_score;
  j["shard"] = d.shard;
  j["url"] = d.url.value_or("");
  j["title"] = d.title.value_or("");
  return j;
}

ordered_json list_json(const std::string& query, const RankedList& list) {
  ordered_json j;
  j["query"] = query;
  j["results"] = ordered_json::array();
  for (const auto& h : list.entries) j["results"].push_back(hit_json(h));
  return j;
}

std::ofstream open_out(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot create " + path);
  return out;
}

std::string part_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "part-%02zu", i);
  return buf;
}

std::string segment_file(std::int64_t segment) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "seg-%04lld.fvi", static_cast<long long>(segment));
  return buf;
}

// ---------------------------------------------------------------------------
// Corpus and index plumbing

std::vector<Document> load_all_documents(const AppConfig& cfg) {
  if (cfg.corpus_paths.empty()) throw Error(Errc::invalid_config, "corpus.paths: no corpus file given (--corpus)");
  std::vector<Document> docs;
  std::set<std::string> ids;
  for (const auto& path : cfg.corpus_paths) {
    read_corpus(path, [&](Document&& d) {
      if (!ids.insert(d.id).second) throw Error(Errc::duplicate_doc_id, d.id);
      docs.push_back(std::move(d));
    });
  }
  return docs;
}

PartitionPlan plan_for(const AppConfig& cfg, const std::vector<Document>& docs) {
  std::int64_t segments = 0;
  if (cfg.num_segments) {
    segments = *cfg.num_segments;
  } else {
    for (const auto& d : docs) segments = std::max(segments, d.segment + 1);
  }
  if (segments == 0) segments = 1;
  return make_partition_plan(segments, cfg.num_partitions);
}

std::vector<std::vector<const Document*>> split_by_partition(const std::vector<Document>& docs, const PartitionPlan& plan) {
  std::vector<std::vector<const Document*>> parts(plan.size());
  for (const auto& d : docs) parts[assign_partition(d.segment, plan)].push_back(&d);
  return parts;
}

void write_manifest(const fs::path& dir, const ordered_json& manifest) {
  auto out = open_out((dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

std::shared_ptr<Encoder> make_encoder(const AppConfig& cfg, std::optional<int> dim_override = std::nullopt) {
  EmbeddingSpec spec = cfg.embedding;
  if (dim_override) spec.dim = *dim_override;
  if (cfg.encoder == "remote") {
    const auto served = fetch_model_spec(cfg.embed_url, std::chrono::milliseconds(cfg.timeout_ms));
    if (served.dim != spec.dim) {
      throw Error(Errc::dimension_mismatch, "model server at " + cfg.embed_url + " embeds to " +
                                                std::to_string(served.dim) + " components, expected " +
                                                std::to_string(spec.dim));
    }
    return std::make_shared<RemoteEncoder>(cfg.embed_url, spec.dim, 32, std::chrono::milliseconds(cfg.timeout_ms));
  }
  return std::make_shared<HashingEncoder>(spec);
}

std::vector<std::string> partition_dirs(const std::string& root) {
  std::vector<std::string> out;
  if (root.empty() || !fs::is_directory(root)) return out;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && e.path().filename().string().rfind("part-", 0) == 0) out.push_back(e.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::shared_ptr<LocalShard> open_local_shard(const std::string& name, const fs::path& lexical_path,
                                             const fs::path& dense_path, const AppConfig& cfg) {
  std::shared_ptr<const LexicalIndex> lexical;
  std::shared_ptr<const FlatVectorIndex> dense;
  std::shared_ptr<Encoder> encoder;
  if (!lexical_path.empty() && fs::exists(lexical_path)) {
    lexical = std::make_shared<const LexicalIndex>(LexicalIndex::load(lexical_path));
  }
  if (!dense_path.empty() && fs::exists(dense_path)) {
    auto idx = std::make_shared<const FlatVectorIndex>(load_dense(dense_path));
    encoder = make_encoder(cfg, static_cast<int>(idx->dim()));
    dense = std::move(idx);
  }
  if (!lexical && !dense) throw Error(Errc::not_found, "no index found for shard " + name);
  return std::make_shared<LocalShard>(name, std::move(lexical), std::move(dense), std::move(encoder));
}

/// Shards from --shard URLs, otherwise the local partition directories.
std::shared_ptr<Federation> open_federation(const AppConfig& cfg) {
  std::vector<std::shared_ptr<ShardClient>> shards;
  if (!cfg.shards.empty()) {
    for (const auto& url : cfg.shards) {
      shards.push_back(std::make_shared<HttpShard>(url, std::chrono::milliseconds(cfg.timeout_ms)));
    }
    return std::make_shared<Federation>(std::move(shards));
  }
  std::set<std::string> names;
  for (const auto& n : partition_dirs(cfg.lexical_dir)) names.insert(n);
  for (const auto& n : partition_dirs(cfg.dense_dir)) names.insert(n);
  if (names.empty()) {
    throw Error(Errc::invalid_config, "federation.shards: no shard URLs and no partitions under " + cfg.lexical_dir +
                                          " or " + cfg.dense_dir);
  }
  for (const auto& n : names) {
    shards.push_back(open_local_shard(n, fs::path(cfg.lexical_dir) / n / kLexicalFile,
                                      fs::path(cfg.dense_dir) / n / kDenseFile, cfg));
  }
  return std::make_shared<Federation>(std::move(shards));
}

// ---------------------------------------------------------------------------
// Query backends: a remote aggregator or an in-process federation.

class Backend {
 public:
  virtual ~Backend() = default;
  virtual RankedList search(const FederatedQuery& q) = 0;
  virtual RankedList rerank(const std::string& query, const RerankConfig& rc, const std::string& scorer, SearchMode mode,
                            StatsMode stats) = 0;
};

RankedList parse_results(const json& body) {
  RankedList out;
  for (const auto& r : body.at("results")) {
    ScoredDoc d;
    d.doc_id = r.at("docid").get<std::string>();
    d.score = r.at("score").get<double>();
    d.shard = r.value("shard", 0);
    d.url = r.value("url", std::string());
    d.title = r.value("title", std::string());
    if (r.contains("first_stage_score")) d.first_stage_score = r.at("first_stage_score").get<double>();
    out.entries.push_back(std::move(d));
  }
  return out;
}

class AggregatorBackend final : public Backend {
 public:
  AggregatorBackend(std::string url, std::chrono::milliseconds timeout) : url_(std::move(url)), timeout_(timeout) {}

  RankedList search(const FederatedQuery& q) override {
    httplib::Params p{{"q", q.text},
                      {"k", std::to_string(q.k)},
                      {"mode", std::string(to_string(q.mode))},
                      {"stats", std::string(to_string(q.stats))},
                      {"field", std::string(to_string(q.field))}};
    const json body = get("/search", p);
    if (body.value("degraded", false)) log("warning: degraded result, failed shards " + body["failed_shards"].dump());
    return parse_results(body);
  }

  RankedList rerank(const std::string& query, const RerankConfig& rc, const std::string& scorer, SearchMode mode,
                    StatsMode stats) override {
    httplib::Params p{{"q", query},
                      {"depth", std::to_string(rc.first_stage_depth)},
                      {"out", std::to_string(rc.output_size)},
                      {"scorer", scorer},
                      {"mode", std::string(to_string(mode))},
                      {"stats", std::string(to_string(stats))}};
    return parse_results(get("/rerank", p));
  }

 private:
  json get(const std::string& path, const httplib::Params& params) {
    auto client = detail::make_client(url_, timeout_);
    auto res = client->Get(path, params, httplib::Headers{});
    if (!res) detail::throw_transport("GET " + url_ + path, res.error());
    if (res->status != 200) throw UpstreamError(res->status, res->body);
    return detail::parse_body("aggregator", res->body);
  }

  std::string url_;
  std::chrono::milliseconds timeout_;
};

class FederationBackend final : public Backend {
 public:
  FederationBackend(std::shared_ptr<Federation> fed, const AppConfig& cfg) : fed_(std::move(fed)), cfg_(cfg) {}

  RankedList search(const FederatedQuery& q) override {
    auto r = fed_->search(q);
    if (r.degraded) log("warning: degraded result from " + std::to_string(r.failed_shards().size()) + " failed shard(s)");
    return std::move(r.list);
  }

  RankedList rerank(const std::string& query, const RerankConfig& rc, const std::string& scorer, SearchMode mode,
                    StatsMode stats) override {
    if (scorer == "remote") {
      if (cfg_.scorer_url.empty()) throw Error(Errc::invalid_config, "rerank.scorer_url: required for --scorer remote");
      RemoteScorer s(cfg_.scorer_url, cfg_.scorer_batch_size, std::chrono::milliseconds(cfg_.timeout_ms));
      return rerank_query(*fed_, query, rc, s, mode, stats);
    }
    OverlapScorer s;
    return rerank_query(*fed_, query, rc, s, mode, stats);
  }

 private:
  std::shared_ptr<Federation> fed_;
  const AppConfig& cfg_;
};

std::unique_ptr<Backend> open_backend(const AppConfig& cfg) {
  if (!cfg.aggregator.empty()) {
    return std::make_unique<AggregatorBackend>(cfg.aggregator, std::chrono::milliseconds(cfg.timeout_ms));
  }
  return std::make_unique<FederationBackend>(open_federation(cfg), cfg);
}

std::vector<Query> queries_from(const Args& a) {
  if (!a.q.empty()) return {Query{"q1", a.q}};
  if (!a.queries.empty()) return load_queries(a.queries);
  throw Error(Errc::invalid_args, "give --q or --queries");
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_build_lexical(const AppConfig& cfg) {
  const auto docs = load_all_documents(cfg);
  const auto plan = plan_for(cfg, docs);
  const auto parts = split_by_partition(docs, plan);

  std::vector<std::future<void>> jobs;
  for (std::size_t p = 0; p < plan.size(); ++p) {
    jobs.push_back(std::async(std::launch::async, [&, p] {
      LexicalIndex index(cfg.bm25);
      for (const Document* d : parts[p]) index.add(*d);
      index.commit();
      const fs::path dir = fs::path(cfg.lexical_dir) / part_name(p);
      index.save(dir / kLexicalFile);
      ordered_json m;
      m["partition"] = p;
      m["first_segment"] = plan.ranges[p].first;
      m["last_segment"] = plan.ranges[p].last;
      m["documents"] = index.doc_count();
      m["k1"] = cfg.bm25.k1;
      m["b"] = cfg.bm25.b;
      write_manifest(dir, m);
    }));
  }
  for (auto& j : jobs) j.get();
  for (std::size_t p = 0; p < plan.size(); ++p) {
    std::cout << part_name(p) << " segments " << plan.ranges[p].first << "-" << plan.ranges[p].last << ": "
              << parts[p].size() << " docs\n";
  }
  return 0;
}

std::map<std::string, Eigen::VectorXf> load_vectors_file(const std::string& path, int dim) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open " + path);
  std::map<std::string, Eigen::VectorXf> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("id") || !j.contains("vector") || !j["vector"].is_array()) {
      throw Error(Errc::format_error, path + ":" + std::to_string(line_no) + ": expected {\"id\",\"vector\"}");
    }
    if (static_cast<int>(j["vector"].size()) != dim) {
      throw Error(Errc::dimension_mismatch, path + ":" + std::to_string(line_no) + ": vector width differs from " +
                                                std::to_string(dim));
    }
    Eigen::VectorXf v(dim);
    for (int i = 0; i < dim; ++i) v[i] = j["vector"][i].get<float>();
    out[j["id"].get<std::string>()] = std::move(v);
  }
  return out;
}

int cmd_build_dense(const AppConfig& cfg, const Args& a) {
  const auto docs = load_all_documents(cfg);
  const int dim = cfg.embedding.dim;

  std::map<std::string, Eigen::VectorXf> precomputed;
  std::shared_ptr<Encoder> encoder;
  if (!a.vectors.empty()) {
    precomputed = load_vectors_file(a.vectors, dim);
  } else {
    encoder = make_encoder(cfg);
  }
  const auto vectors_for = [&](const std::vector<const Document*>& group) {
    std::vector<Eigen::VectorXf> out;
    if (encoder) {
      constexpr std::size_t kBatch = 64;
      for (std::size_t i = 0; i < group.size(); i += kBatch) {
        std::vector<std::string> texts;
        for (std::size_t j = i; j < std::min(group.size(), i + kBatch); ++j) {
          texts.push_back(dense_text(group[j]->title, group[j]->body));
        }
        for (auto& v : encoder->embed(texts)) out.push_back(std::move(v));
      }
      return out;
    }
    for (const Document* d : group) {
      auto it = precomputed.find(d->id);
      if (it == precomputed.end()) throw Error(Errc::not_found, "no vector for document " + d->id);
      out.push_back(it->second);
    }
    return out;
  };
  const auto build = [&](const std::vector<const Document*>& group) {
    FlatVectorIndex index(dim);
    index.reserve(static_cast<Eigen::Index>(group.size()));
    const auto vecs = vectors_for(group);
    for (std::size_t i = 0; i < group.size(); ++i) add_vector(index, group[i]->id, vecs[i]);
    return index;
  };

  if (a.per_segment) {
    std::map<std::int64_t, std::vector<const Document*>> by_segment;
    for (const auto& d : docs) by_segment[d.segment].push_back(&d);
    for (const auto& [seg, group] : by_segment) {
      persist_dense(build(group), fs::path(cfg.dense_dir) / "segments" / segment_file(seg));
      std::cout << segment_file(seg) << ": " << group.size() << " vectors\n";
    }
    return 0;
  }

  const auto plan = plan_for(cfg, docs);
  const auto parts = split_by_partition(docs, plan);
  for (std::size_t p = 0; p < plan.size(); ++p) {
    const fs::path dir = fs::path(cfg.dense_dir) / part_name(p);
    persist_dense(build(parts[p]), dir / kDenseFile);
    ordered_json m;
    m["partition"] = p;
    m["first_segment"] = plan.ranges[p].first;
    m["last_segment"] = plan.ranges[p].last;
    m["vectors"] = parts[p].size();
    m["dim"] = dim;
    m["encoder"] = a.vectors.empty() ? cfg.encoder : "precomputed";
    write_manifest(dir, m);
    std::cout << part_name(p) << " segments " << plan.ranges[p].first << "-" << plan.ranges[p].last << ": "
              << parts[p].size() << " vectors\n";
  }
  return 0;
}

int cmd_merge_dense(const AppConfig& cfg, const Args& a) {
  if (!a.segments_dir.empty()) {
    std::map<std::int64_t, fs::path> files;
    for (const auto& e : fs::directory_iterator(a.segments_dir)) {
      const std::string name = e.path().filename().string();
      if (name.rfind("seg-", 0) == 0 && e.path().extension() == ".fvi") files[std::stoll(name.substr(4))] = e.path();
    }
    if (files.empty()) throw Error(Errc::not_found, "no seg-*.fvi files in " + a.segments_dir);
    const std::int64_t segments = cfg.num_segments.value_or(files.rbegin()->first + 1);
    const auto plan = make_partition_plan(segments, cfg.num_partitions);
    const std::string out_root = a.out.empty() ? cfg.dense_dir : a.out;
    for (std::size_t p = 0; p < plan.size(); ++p) {
      std::vector<FlatVectorIndex> parts;
      for (auto s = plan.ranges[p].first; s <= plan.ranges[p].last; ++s) {
        if (auto it = files.find(s); it != files.end()) parts.push_back(load_dense(it->second));
      }
      const Eigen::Index dim = parts.empty() ? cfg.embedding.dim : parts.front().dim();
      const auto merged = merge_dense<float>(parts, dim);
      persist_dense(merged, fs::path(out_root) / part_name(p) / kDenseFile);
      std::cout << part_name(p) << " segments " << plan.ranges[p].first << "-" << plan.ranges[p].last << ": "
                << merged.size() << " vectors from " << parts.size() << " segment indexes\n";
    }
    return 0;
  }
  if (a.inputs.empty() || a.out.empty()) throw Error(Errc::invalid_args, "give --in files and --out, or --segments-dir");
  std::vector<FlatVectorIndex> parts;
  for (const auto& f : a.inputs) parts.push_back(load_dense(f));
  const auto merged = merge_dense<float>(parts);
  persist_dense(merged, a.out);
  std::cout << a.out << ": " << merged.size() << " vectors\n";
  return 0;
}

HttpService* g_running = nullptr;

void on_signal(int) {
  if (g_running) g_running->stop();
}

void serve(HttpService& service, const Args& a, const std::string& what) {
  const int port = service.bind(a.host, a.port);
  std::cout << what << " listening on http://" << a.host << ":" << port << std::endl;
  g_running = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  service.run();
  g_running = nullptr;
}

int cmd_serve_shard(const AppConfig& cfg, const Args& a) {
  fs::path lexical = a.lexical_index;
  fs::path dense = a.dense_index;
  if (!a.shard_dir.empty()) {
    if (lexical.empty()) lexical = fs::path(a.shard_dir) / kLexicalFile;
    if (dense.empty()) dense = fs::path(a.shard_dir) / kDenseFile;
  }
  auto shard = open_local_shard(a.shard_dir.empty() ? "shard" : a.shard_dir, lexical, dense, cfg);
  ShardService service(shard);
  serve(service, a, "shard");
  return 0;
}

int cmd_serve_aggregator(const AppConfig& cfg, const Args& a) {
  if (cfg.shards.empty()) throw Error(Errc::invalid_config, "federation.shards: at least one shard URL required");
  auto fed = open_federation(cfg);
  if (!fed->publish_global_stats()) log("warning: some shards did not answer /stats; global stats deferred");
  AggregatorOptions opts;
  opts.default_k = cfg.default_k;
  opts.default_stats = parse_stats_mode(cfg.stats);
  opts.rerank = cfg.rerank;
  opts.scorer_endpoint = cfg.scorer_url;
  opts.scorer_batch_size = cfg.scorer_batch_size;
  opts.scorer_timeout = std::chrono::milliseconds(cfg.timeout_ms);
  AggregatorService service(fed, opts);
  serve(service, a, "aggregator");
  return 0;
}

int cmd_search(const AppConfig& cfg, const Args& a) {
  auto backend = open_backend(cfg);
  FederatedQuery fq;
  fq.k = cfg.default_k;
  fq.mode = parse_search_mode(a.mode);
  fq.stats = parse_stats_mode(cfg.stats);
  fq.field = parse_field(a.field);

  if (!a.q.empty()) {
    fq.text = a.q;
    std::cout << list_json(a.q, backend->search(fq)).dump(2) << '\n';
    return 0;
  }
  RunFile run;
  for (const auto& q : queries_from(a)) {
    fq.text = q.text;
    RankedList l = backend->search(fq);
    l.query_id = q.id;
    run.add(std::move(l), a.tag);
  }
  if (a.run_out.empty()) {
    write_run(std::cout, run);
  } else {
    save_run(a.run_out, run);
    std::cout << "wrote " << run.size() << " rankings to " << a.run_out << '\n';
  }
  return 0;
}

int cmd_rerank(const AppConfig& cfg, const Args& a) {
  if (a.scorer != "builtin" && a.scorer != "remote") throw Error(Errc::invalid_args, "--scorer must be builtin|remote");
  auto backend = open_backend(cfg);
  const auto mode = parse_search_mode(a.mode);
  const auto stats = parse_stats_mode(cfg.stats);
  if (!a.q.empty()) {
    std::cout << list_json(a.q, backend->rerank(a.q, cfg.rerank, a.scorer, mode, stats)).dump(2) << '\n';
    return 0;
  }
  RunFile run;
  for (const auto& q : queries_from(a)) {
    RankedList l = backend->rerank(q.text, cfg.rerank, a.scorer, mode, stats);
    l.query_id = q.id;
    run.add(std::move(l), a.tag);
  }
  if (a.run_out.empty()) {
    write_run(std::cout, run);
  } else {
    save_run(a.run_out, run);
    std::cout << "wrote " << run.size() << " rankings to " << a.run_out << '\n';
  }
  return 0;
}

std::function<std::optional<DocText>(const std::string&)> text_resolver(Federation& fed) {
  return [&fed](const std::string& id) -> std::optional<DocText> {
    auto s = fed.fetch(id);
    if (!s) return std::nullopt;
    return DocText{s->url, s->title, s->body};
  };
}

void report_generation(const GenerationStats& stats) {
  for (const auto& w : stats.warnings) log("warning: " + w);
  log("emitted " + std::to_string(stats.emitted) + " examples, " + std::to_string(stats.short_count) +
      " short, " + std::to_string(stats.skipped_missing_target) + " missing targets, " +
      std::to_string(stats.skipped_missing_ranking) + " missing rankings");
}

int cmd_gen_anchor(const AppConfig& cfg, const Args& a) {
  std::ifstream in(a.anchors);
  if (!in) throw Error(Errc::io_error, "cannot open " + a.anchors);
  const AnchorFile anchors = parse_anchors(in);
  for (const auto& e : anchors.errors) log("skipped " + a.anchors + " " + e);

  auto fed = open_federation(cfg);
  FederationSource source(*fed, parse_stats_mode(cfg.stats));
  auto out = open_out(a.out);
  const auto resolve = text_resolver(*fed);
  const auto stats = gen_anchor_examples(anchors.records, source, cfg.sampling, [&](TrainingExample&& ex) {
    if (a.with_text) attach_texts(ex, resolve);
    out << to_json_line(ex, a.with_text) << '\n';
  });
  report_generation(stats);
  return 0;
}

int cmd_gen_ranking(const AppConfig& cfg, const Args& a) {
  const Qrels qrels = load_qrels(a.qrels);
  const RunFile ranking = load_run(a.ranking);
  std::unordered_map<std::string, std::string> texts;
  if (!a.queries.empty()) {
    for (auto& q : load_queries(a.queries)) texts[q.id] = q.text;
  }
  std::shared_ptr<Federation> fed;
  if (a.with_text) fed = open_federation(cfg);
  auto out = open_out(a.out);
  const auto stats = gen_ranking_negatives(qrels, ranking, cfg.sampling, texts, [&](TrainingExample&& ex) {
    if (fed) attach_texts(ex, text_resolver(*fed));
    out << to_json_line(ex, a.with_text) << '\n';
  });
  report_generation(stats);
  return 0;
}

int cmd_eval(const AppConfig& cfg, const Args& a) {
  const RunFile run = load_run(a.run);
  const Qrels qrels = load_qrels(a.qrels);
  std::optional<std::vector<std::string>> only;
  if (!a.queries.empty()) {
    const auto all = load_queries(a.queries);
    const auto kept = filter_queries(all, qrels);
    log("query filter kept " + std::to_string(kept.size()) + " of " + std::to_string(all.size()));
    only.emplace();
    for (const auto& q : kept) only->push_back(q.id);
  }
  const MetricReport report = evaluate_run(run, qrels, cfg.cutoffs, only ? &*only : nullptr);
  const std::string js = report.to_json(a.per_query);
  if (!a.json_out.empty()) {
    auto out = open_out(a.json_out);
    out << js << '\n';
  }
  std::cout << js << "\n\n" << report.to_table(a.per_query);
  return 0;
}

int cmd_bench_latency(const AppConfig& cfg, const Args& a) {
  auto backend = open_backend(cfg);
  const auto queries = queries_from(a);
  FederatedQuery fq;
  fq.k = cfg.default_k;
  fq.mode = parse_search_mode(a.mode);
  fq.stats = parse_stats_mode(cfg.stats);
  fq.field = parse_field(a.field);
  std::vector<Millis> samples;
  for (std::size_t r = 0; r < std::max<std::size_t>(a.repeat, 1); ++r) {
    for (const auto& q : queries) {
      fq.text = q.text;
      const auto t0 = std::chrono::steady_clock::now();
      backend->search(fq);
      samples.push_back(std::chrono::steady_clock::now() - t0);
    }
  }
  const auto s = LatencyStats::from_samples(samples);
  ordered_json j;
  j["queries"] = queries.size();
  j["samples"] = s.count;
  j["k"] = fq.k;
  j["mode"] = std::string(to_string(fq.mode));
  j["p50_ms"] = s.p50.count();
  j["p95_ms"] = s.p95.count();
  j["max_ms"] = s.max.count();
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"Sharded BM25 + dense retrieval: build, serve, search, rerank, sample training data, evaluate."};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  Overrides ov;
  Args a;
  app.add_option("--config", a.config, "Config file (.toml or .json)")->envname(env_name("--config"));

  // Flag groups shared by several subcommands.
  const auto corpus_flags = [&](CLI::App* s) {
    config_flag(s, "--corpus", ov.corpus, "Corpus .jsonl or .jsonl.gz file(s)");
    config_flag(s, "--partitions", ov.partitions, "Number of partitions (default 4)");
    config_flag(s, "--segments", ov.segments, "Number of segments (default: highest segment + 1)");
  };
  const auto target_flags = [&](CLI::App* s) {
    config_flag(s, "--aggregator", ov.aggregator, "Aggregator base URL");
    config_flag(s, "--shard", ov.shards, "Shard base URL (repeatable)");
    config_flag(s, "--lexical-dir", ov.lexical_dir, "Root of local lexical partitions");
    config_flag(s, "--dense-dir", ov.dense_dir, "Root of local dense partitions");
    config_flag(s, "--timeout-ms", ov.timeout_ms, "Per-request timeout in ms (default 30000)");
    config_flag(s, "--stats", ov.stats, "per-shard | global BM25 statistics");
  };
  const auto encoder_flags = [&](CLI::App* s) {
    config_flag(s, "--encoder", ov.encoder, "hash | remote");
    config_flag(s, "--embed-url", ov.embed_url, "Model server base URL for --encoder remote");
    config_flag(s, "--dim", ov.dim, "Embedding width (default 768)");
    config_flag(s, "--max-tokens", ov.max_tokens, "Token limit per text (default 512)");
  };
  const auto query_flags = [&](CLI::App* s) {
    s->add_option("--q", a.q, "Query text");
    s->add_option("--queries", a.queries, "Query file: qid<TAB>text per line");
    s->add_option("--mode", a.mode, "lexical | dense")->capture_default_str();
    s->add_option("--run-out", a.run_out, "Write a TREC run file here (with --queries)");
    s->add_option("--tag", a.tag, "Run tag column")->capture_default_str();
  };

  auto* build_lexical = app.add_subcommand("build-lexical", "Build one BM25 index per partition");
  corpus_flags(build_lexical);
  config_flag(build_lexical, "--out", ov.lexical_dir, "Output root; partitions go to <out>/part-NN");
  config_flag(build_lexical, "--k1", ov.k1, "BM25 k1 (default 0.9)");
  config_flag(build_lexical, "--b", ov.b, "BM25 b (default 0.4)");

  auto* build_dense = app.add_subcommand("build-dense", "Build flat vector indexes per partition or per segment");
  corpus_flags(build_dense);
  encoder_flags(build_dense);
  config_flag(build_dense, "--out", ov.dense_dir, "Output root");
  build_dense->add_option("--vectors", a.vectors, "Precomputed vectors: {\"id\",\"vector\"} per line");
  build_dense->add_flag("--per-segment", a.per_segment, "Write <out>/segments/seg-NNNN.fvi instead of partitions");

  auto* merge = app.add_subcommand("merge-dense", "Merge flat vector indexes");
  merge->add_option("--in", a.inputs, "Input .fvi files, merged in order");
  merge->add_option("--out", a.out, "Output .fvi file, or output root with --segments-dir");
  merge->add_option("--segments-dir", a.segments_dir, "Merge seg-NNNN.fvi files into partitions");
  config_flag(merge, "--partitions", ov.partitions, "Number of partitions (default 4)");
  config_flag(merge, "--segments", ov.segments, "Number of segments");
  config_flag(merge, "--dim", ov.dim, "Dim for partitions without any segment");

  auto* serve_shard = app.add_subcommand("serve-shard", "Serve one partition over HTTP");
  serve_shard->add_option("--shard-dir", a.shard_dir, "Directory holding lexical.idx and/or dense.fvi");
  serve_shard->add_option("--lexical-index", a.lexical_index, "Lexical index file");
  serve_shard->add_option("--dense-index", a.dense_index, "Dense index file");
  serve_shard->add_option("--host", a.host, "Bind address")->capture_default_str();
  serve_shard->add_option("--port", a.port, "Port (0 picks a free one)")->capture_default_str();
  encoder_flags(serve_shard);

  auto* serve_agg = app.add_subcommand("serve-aggregator", "Serve the federating aggregator over HTTP");
  config_flag(serve_agg, "--shard", ov.shards, "Shard base URL (repeatable)");
  config_flag(serve_agg, "--timeout-ms", ov.timeout_ms, "Per-shard timeout in ms (default 30000)");
  config_flag(serve_agg, "--k", ov.k, "Default k (default 10)");
  config_flag(serve_agg, "--stats", ov.stats, "Default stats mode: per-shard | global");
  config_flag(serve_agg, "--depth", ov.depth, "Default rerank depth (default 1000)");
  config_flag(serve_agg, "--output", ov.output, "Default rerank output size (default 10)");
  config_flag(serve_agg, "--scorer-url", ov.scorer_url, "Remote scorer base URL");
  config_flag(serve_agg, "--scorer-batch", ov.scorer_batch, "Remote scorer batch size (default 32)");
  serve_agg->add_option("--host", a.host, "Bind address")->capture_default_str();
  serve_agg->add_option("--port", a.port, "Port (0 picks a free one)")->capture_default_str();

  auto* search = app.add_subcommand("search", "Run queries through the federation");
  query_flags(search);
  target_flags(search);
  encoder_flags(search);
  config_flag(search, "--k", ov.k, "Results per query (default 10)");
  search->add_option("--field", a.field, "body | title | url")->capture_default_str();

  auto* rerank = app.add_subcommand("rerank", "First-stage retrieval followed by reranking");
  query_flags(rerank);
  target_flags(rerank);
  encoder_flags(rerank);
  config_flag(rerank, "--depth", ov.depth, "First-stage depth (default 1000)");
  config_flag(rerank, "--output", ov.output, "Results returned (default 10)");
  rerank->add_option("--scorer", a.scorer, "builtin | remote")->capture_default_str();
  config_flag(rerank, "--scorer-url", ov.scorer_url, "Remote scorer base URL");
  config_flag(rerank, "--scorer-batch", ov.scorer_batch, "Remote scorer batch size (default 32)");

  auto* gen_anchor = app.add_subcommand("gen-anchor-train", "Anchor-text queries with BM25 negatives");
  gen_anchor->add_option("--anchors", a.anchors, "TSV: target_doc_id<TAB>anchor_text")->required();
  gen_anchor->add_option("--out", a.out, "Output .jsonl")->required();
  gen_anchor->add_flag("--with-text", a.with_text, "Include resolved document texts");
  config_flag(gen_anchor, "--negatives", ov.bm25_negatives, "BM25 negatives per anchor (default 30)");
  target_flags(gen_anchor);

  auto* gen_ranking = app.add_subcommand("gen-ranking-train", "Random negatives from a ranking's top pool");
  gen_ranking->add_option("--qrels", a.qrels, "Positives: qid 0 docid grade")->required();
  gen_ranking->add_option("--ranking", a.ranking, "TREC run to sample from")->required();
  gen_ranking->add_option("--queries", a.queries, "Query texts: qid<TAB>text");
  gen_ranking->add_option("--out", a.out, "Output .jsonl")->required();
  gen_ranking->add_flag("--with-text", a.with_text, "Include resolved document texts (needs shards)");
  config_flag(gen_ranking, "--pool-depth", ov.pool_depth, "Pool depth (default 100)");
  config_flag(gen_ranking, "--negatives", ov.random_negatives, "Negatives per positive (default 10)");
  config_flag(gen_ranking, "--seed", ov.seed, "RNG seed (default 0)");
  target_flags(gen_ranking);

  auto* eval = app.add_subcommand("eval", "Recall@k, MRR, P@k of a run against qrels");
  eval->add_option("--run", a.run, "TREC run file")->required();
  eval->add_option("--qrels", a.qrels, "Qrels file")->required();
  eval->add_option("--queries", a.queries, "Query texts; enables the one-word / no-relevant filter");
  eval->add_option("--json-out", a.json_out, "Also write the JSON report here");
  eval->add_flag("--per-query", a.per_query, "Include per-query values");
  config_flag(eval, "--recall-cutoffs", ov.recall_cutoffs, "Recall cutoffs (default 500,1000)");
  config_flag(eval, "--precision-cutoffs", ov.precision_cutoffs, "Precision cutoffs (default 5,10)");
  config_flag(eval, "--mrr-depth", ov.mrr_depth, "MRR depth (default: whole run)");

  auto* bench = app.add_subcommand("bench-latency", "Replay queries and report p50/p95/max latency");
  bench->add_option("--queries", a.queries, "Query file: qid<TAB>text")->required();
  bench->add_option("--repeat", a.repeat, "Replays of the query file")->capture_default_str();
  bench->add_option("--mode", a.mode, "lexical | dense")->capture_default_str();
  bench->add_option("--field", a.field, "body | title | url")->capture_default_str();
  config_flag(bench, "--k", ov.k, "Results per query (default 10)");
  target_flags(bench);
  encoder_flags(bench);

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return 2;
  }

  AppConfig cfg;
  try {
    if (!a.config.empty()) cfg = load_app_config(a.config);
    ov.apply(cfg);
    cfg.validate();
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    if (name == "build-lexical") return cmd_build_lexical(cfg);
    if (name == "build-dense") return cmd_build_dense(cfg, a);
    if (name == "merge-dense") return cmd_merge_dense(cfg, a);
    if (name == "serve-shard") return cmd_serve_shard(cfg, a);
    if (name == "serve-aggregator") return cmd_serve_aggregator(cfg, a);
    if (name == "search") return cmd_search(cfg, a);
    if (name == "rerank") return cmd_rerank(cfg, a);
    if (name == "gen-anchor-train") return cmd_gen_anchor(cfg, a);
    if (name == "gen-ranking-train") return cmd_gen_ranking(cfg, a);
    if (name == "eval") return cmd_eval(cfg, a);
    if (name == "bench-latency") return cmd_bench_latency(cfg, a);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return (e.code() == Errc::invalid_args || e.code() == Errc::invalid_config) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace shardsearch::cli
