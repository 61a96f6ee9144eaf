#include "app_config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <toml.hpp>

#include "shardsearch/error.hpp"
#include "shardsearch/federation.hpp"

namespace shardsearch::cli {
namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& field, const std::string& what) {
  throw Error(Errc::invalid_config, field + ": " + what);
}

std::string as_string(const json& v, const std::string& field) {
  if (!v.is_string()) bad(field, "expected a string");
  return v.get<std::string>();
}

std::int64_t as_int(const json& v, const std::string& field) {
  if (!v.is_number_integer()) bad(field, "expected an integer");
  return v.get<std::int64_t>();
}

std::size_t as_count(const json& v, const std::string& field) {
  const auto n = as_int(v, field);
  if (n < 0) bad(field, "must be >= 0");
  return static_cast<std::size_t>(n);
}

double as_double(const json& v, const std::string& field) {
  if (!v.is_number()) bad(field, "expected a number");
  return v.get<double>();
}

std::vector<std::string> as_strings(const json& v, const std::string& field) {
  if (!v.is_array()) bad(field, "expected an array of strings");
  std::vector<std::string> out;
  for (const auto& e : v) out.push_back(as_string(e, field));
  return out;
}

std::vector<std::size_t> as_counts(const json& v, const std::string& field) {
  if (!v.is_array()) bad(field, "expected an array of integers");
  std::vector<std::size_t> out;
  for (const auto& e : v) out.push_back(as_count(e, field));
  return out;
}

using Setter = std::function<void(AppConfig&, const json&, const std::string&)>;

const std::map<std::string, std::map<std::string, Setter>>& setters() {
  static const std::map<std::string, std::map<std::string, Setter>> table = {
      {"corpus",
       {
           {"paths", [](AppConfig& c, const json& v, const std::string& f) { c.corpus_paths = as_strings(v, f); }},
           {"num_segments", [](AppConfig& c, const json& v, const std::string& f) { c.num_segments = as_int(v, f); }},
           {"num_partitions", [](AppConfig& c, const json& v, const std::string& f) { c.num_partitions = as_int(v, f); }},
       }},
      {"index",
       {
           {"lexical_dir", [](AppConfig& c, const json& v, const std::string& f) { c.lexical_dir = as_string(v, f); }},
           {"dense_dir", [](AppConfig& c, const json& v, const std::string& f) { c.dense_dir = as_string(v, f); }},
       }},
      {"federation",
       {
           {"shards", [](AppConfig& c, const json& v, const std::string& f) { c.shards = as_strings(v, f); }},
           {"aggregator", [](AppConfig& c, const json& v, const std::string& f) { c.aggregator = as_string(v, f); }},
           {"timeout_ms", [](AppConfig& c, const json& v, const std::string& f) { c.timeout_ms = as_int(v, f); }},
           {"default_k", [](AppConfig& c, const json& v, const std::string& f) { c.default_k = as_count(v, f); }},
           {"stats", [](AppConfig& c, const json& v, const std::string& f) { c.stats = as_string(v, f); }},
       }},
      {"bm25",
       {
           {"k1", [](AppConfig& c, const json& v, const std::string& f) { c.bm25.k1 = as_double(v, f); }},
           {"b", [](AppConfig& c, const json& v, const std::string& f) { c.bm25.b = as_double(v, f); }},
       }},
      {"rerank",
       {
           {"depth", [](AppConfig& c, const json& v, const std::string& f) { c.rerank.first_stage_depth = as_count(v, f); }},
           {"output", [](AppConfig& c, const json& v, const std::string& f) { c.rerank.output_size = as_count(v, f); }},
           {"batch_size", [](AppConfig& c, const json& v, const std::string& f) { c.scorer_batch_size = as_count(v, f); }},
           {"scorer_url", [](AppConfig& c, const json& v, const std::string& f) { c.scorer_url = as_string(v, f); }},
       }},
      {"sampling",
       {
           {"bm25_negatives",
            [](AppConfig& c, const json& v, const std::string& f) { c.sampling.n_bm25_negatives = as_count(v, f); }},
           {"pool_depth", [](AppConfig& c, const json& v, const std::string& f) { c.sampling.pool_depth = as_count(v, f); }},
           {"random_negatives",
            [](AppConfig& c, const json& v, const std::string& f) { c.sampling.n_random_negatives = as_count(v, f); }},
           {"seed",
            [](AppConfig& c, const json& v, const std::string& f) {
              c.sampling.rng_seed = static_cast<std::uint64_t>(as_int(v, f));
            }},
       }},
      {"eval",
       {
           {"recall_cutoffs", [](AppConfig& c, const json& v, const std::string& f) { c.cutoffs.recall = as_counts(v, f); }},
           {"precision_cutoffs",
            [](AppConfig& c, const json& v, const std::string& f) { c.cutoffs.precision = as_counts(v, f); }},
           {"mrr_depth", [](AppConfig& c, const json& v, const std::string& f) { c.cutoffs.mrr_depth = as_count(v, f); }},
       }},
      {"dense",
       {
           {"dim", [](AppConfig& c, const json& v, const std::string& f) { c.embedding.dim = static_cast<int>(as_int(v, f)); }},
           {"max_tokens",
            [](AppConfig& c, const json& v, const std::string& f) { c.embedding.max_tokens = static_cast<int>(as_int(v, f)); }},
           {"encoder", [](AppConfig& c, const json& v, const std::string& f) { c.encoder = as_string(v, f); }},
           {"embed_url", [](AppConfig& c, const json& v, const std::string& f) { c.embed_url = as_string(v, f); }},
       }},
  };
  return table;
}

json read_as_json(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".toml") {
    try {
      const toml::table tbl = toml::parse_file(path.string());
      std::ostringstream ss;
      ss << toml::json_formatter{tbl};
      return json::parse(ss.str());
    } catch (const toml::parse_error& e) {
      std::ostringstream where;
      where << e.source().begin;
      throw Error(Errc::invalid_config, path.string() + " " + where.str() + ": " + std::string(e.description()));
    }
  }
  if (ext == ".json") {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::invalid_config, path.string() + ": not valid JSON");
    return j;
  }
  throw Error(Errc::invalid_config, path.string() + ": config must end in .toml or .json");
}

}  // namespace

AppConfig load_app_config(const std::filesystem::path& path, AppConfig base) {
  if (!std::filesystem::exists(path)) throw Error(Errc::io_error, "config file " + path.string() + " not found");
  const json root = read_as_json(path);
  if (!root.is_object()) bad("<root>", "expected a table of sections");
  const auto& table = setters();
  for (const auto& [section, values] : root.items()) {
    auto sec = table.find(section);
    if (sec == table.end()) bad(section, "unknown section");
    if (!values.is_object()) bad(section, "expected a table");
    for (const auto& [key, value] : values.items()) {
      const std::string field = section + "." + key;
      auto setter = sec->second.find(key);
      if (setter == sec->second.end()) bad(field, "unknown key");
      setter->second(base, value, field);
    }
  }
  return base;
}

void AppConfig::validate() const {
  if (num_segments && *num_segments <= 0) bad("corpus.num_segments", "must be > 0");
  if (num_partitions <= 0) bad("corpus.num_partitions", "must be > 0");
  if (num_segments && num_partitions > *num_segments) bad("corpus.num_partitions", "exceeds corpus.num_segments");
  if (timeout_ms <= 0) bad("federation.timeout_ms", "must be > 0");
  if (default_k == 0) bad("federation.default_k", "must be > 0");
  try {
    parse_stats_mode(stats);
  } catch (const Error&) {
    bad("federation.stats", "must be per-shard or global");
  }
  if (!(bm25.k1 > 0.0)) bad("bm25.k1", "must be > 0");
  if (!(bm25.b >= 0.0 && bm25.b <= 1.0)) bad("bm25.b", "must lie in [0, 1]");
  if (rerank.output_size == 0) bad("rerank.output", "must be > 0");
  if (rerank.output_size > rerank.first_stage_depth) bad("rerank.output", "exceeds rerank.depth");
  if (scorer_batch_size == 0) bad("rerank.batch_size", "must be > 0");
  if (sampling.n_bm25_negatives == 0) bad("sampling.bm25_negatives", "must be > 0");
  if (sampling.pool_depth == 0) bad("sampling.pool_depth", "must be > 0");
  if (sampling.n_random_negatives == 0) bad("sampling.random_negatives", "must be > 0");
  if (sampling.n_random_negatives > sampling.pool_depth) bad("sampling.random_negatives", "exceeds sampling.pool_depth");
  for (auto k : cutoffs.recall) {
    if (k == 0) bad("eval.recall_cutoffs", "cutoffs must be >= 1");
  }
  for (auto k : cutoffs.precision) {
    if (k == 0) bad("eval.precision_cutoffs", "cutoffs must be >= 1");
  }
  if (cutoffs.mrr_depth && *cutoffs.mrr_depth == 0) bad("eval.mrr_depth", "must be >= 1");
  if (embedding.dim <= 0) bad("dense.dim", "must be > 0");
  if (embedding.max_tokens <= 0) bad("dense.max_tokens", "must be > 0");
  if (encoder != "hash" && encoder != "remote") bad("dense.encoder", "must be hash or remote");
  if (encoder == "remote" && embed_url.empty()) bad("dense.embed_url", "required when dense.encoder is remote");
}

}  // namespace shardsearch::cli
