#include "shardsearch/evalkit.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "shardsearch/analyzer.hpp"
#include "shardsearch/error.hpp"

namespace shardsearch {
namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

[[noreturn]] void format_error(std::size_t line_no, const std::string& what) {
  throw Error(Errc::format_error, "line " + std::to_string(line_no) + ": " + what);
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  return in;
}

std::size_t hits_in_top(const RankedList& ranking, const RelevantSet& relevant, std::size_t k) {
  std::size_t hits = 0;
  const std::size_t n = std::min(k, ranking.size());
  for (std::size_t i = 0; i < n; ++i) hits += relevant.count(ranking.entries[i].doc_id);
  return hits;
}

}  // namespace

RelevantSet Qrels::relevant(const std::string& query_id) const {
  RelevantSet out;
  auto it = judgments.find(query_id);
  if (it == judgments.end()) return out;
  for (const auto& [doc, grade] : it->second) {
    if (grade >= 1) out.insert(doc);
  }
  return out;
}

std::size_t Qrels::relevant_count(const std::string& query_id) const { return relevant(query_id).size(); }

bool Qrels::is_relevant(const std::string& query_id, const std::string& doc_id) const {
  auto it = judgments.find(query_id);
  if (it == judgments.end()) return false;
  auto jt = it->second.find(doc_id);
  return jt != it->second.end() && jt->second >= 1;
}

Qrels parse_qrels(std::istream& in) {
  Qrels q;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto cols = split_ws(line);
    if (cols.empty()) continue;
    if (cols.size() != 4) format_error(line_no, "expected 'qid 0 docid grade', got " + std::to_string(cols.size()) + " columns");
    int grade = 0;
    if (!parse_number(cols[3], grade)) format_error(line_no, "grade '" + cols[3] + "' is not an integer");
    if (!q.judgments[cols[0]].emplace(cols[2], grade).second) {
      format_error(line_no, "repeated judgment for (" + cols[0] + ", " + cols[2] + ")");
    }
  }
  return q;
}

Qrels load_qrels(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return parse_qrels(in);
}

void write_qrels(std::ostream& out, const Qrels& qrels) {
  for (const auto& [qid, docs] : qrels.judgments) {
    for (const auto& [doc, grade] : docs) out << qid << " 0 " << doc << ' ' << grade << '\n';
  }
}

void RunFile::add(RankedList ranking, std::string tag) {
  if (!index_.emplace(ranking.query_id, rankings_.size()).second) {
    throw Error(Errc::invalid_args, "query '" + ranking.query_id + "' already in run");
  }
  rankings_.push_back(std::move(ranking));
  tags_.push_back(std::move(tag));
}

const RankedList* RunFile::find(const std::string& query_id) const {
  auto it = index_.find(query_id);
  return it == index_.end() ? nullptr : &rankings_[it->second];
}

RunFile parse_run(std::istream& in) {
  std::vector<RankedList> lists;
  std::vector<std::string> tags;
  std::unordered_map<std::string, std::size_t> pos;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto cols = split_ws(line);
    if (cols.empty()) continue;
    if (cols.size() != 6) format_error(line_no, "expected 6 columns, got " + std::to_string(cols.size()));
    std::size_t rank = 0;
    double score = 0.0;
    if (!parse_number(cols[3], rank)) format_error(line_no, "rank '" + cols[3] + "' is not an integer");
    if (!parse_number(cols[4], score)) format_error(line_no, "score '" + cols[4] + "' is not a number");

    auto [it, inserted] = pos.emplace(cols[0], lists.size());
    if (inserted) {
      lists.push_back(RankedList{cols[0], {}});
      tags.push_back(cols[5]);
    }
    RankedList& list = lists[it->second];
    if (rank != list.size() + 1) {
      format_error(line_no, "rank " + cols[3] + " for query " + cols[0] + " should be " + std::to_string(list.size() + 1));
    }
    if (!list.empty() && score > list.entries.back().score) {
      format_error(line_no, "score increases within query " + cols[0]);
    }
    ScoredDoc d;
    d.doc_id = cols[2];
    d.score = score;
    list.entries.push_back(std::move(d));
  }
  RunFile run;
  for (std::size_t i = 0; i < lists.size(); ++i) run.add(std::move(lists[i]), std::move(tags[i]));
  return run;
}

RunFile load_run(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return parse_run(in);
}

std::string format_score(double score) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), score);
  return std::string(buf, ptr);
}

void write_run(std::ostream& out, const RunFile& run) {
  for (std::size_t q = 0; q < run.size(); ++q) {
    const auto& list = run.rankings()[q];
    for (std::size_t i = 0; i < list.size(); ++i) {
      out << list.query_id << " Q0 " << list.entries[i].doc_id << ' ' << (i + 1) << ' '
          << format_score(list.entries[i].score) << ' ' << run.tag(q) << '\n';
    }
  }
}

void save_run(const std::filesystem::path& path, const RunFile& run) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(Errc::io_error, "cannot create " + path.string());
  write_run(out, run);
}

std::vector<Query> parse_queries(std::istream& in) {
  std::vector<Query> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) format_error(line_no, "expected 'qid<TAB>text'");
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

std::vector<Query> load_queries(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return parse_queries(in);
}

std::vector<Query> filter_queries(std::span<const Query> queries, const Qrels& qrels) {
  std::vector<Query> out;
  for (const auto& q : queries) {
    if (analyze(q.text).size() <= 1) continue;
    if (qrels.relevant_count(q.id) == 0) continue;
    out.push_back(q);
  }
  return out;
}

double recall_at_k(const RankedList& ranking, const RelevantSet& relevant, std::size_t k) {
  if (relevant.empty()) throw Error(Errc::no_relevant, "recall needs at least one relevant document");
  return static_cast<double>(hits_in_top(ranking, relevant, k)) / static_cast<double>(relevant.size());
}

double precision_at_k(const RankedList& ranking, const RelevantSet& relevant, std::size_t k) {
  if (k == 0) throw Error(Errc::invalid_args, "precision cutoff must be >= 1");
  return static_cast<double>(hits_in_top(ranking, relevant, k)) / static_cast<double>(k);
}

double reciprocal_rank(const RankedList& ranking, const RelevantSet& relevant, std::optional<std::size_t> depth) {
  const std::size_t n = depth ? std::min(*depth, ranking.size()) : ranking.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (relevant.count(ranking.entries[i].doc_id)) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

void MetricCutoffs::validate() const {
  for (auto k : recall) {
    if (k == 0) throw Error(Errc::invalid_args, "recall cutoff must be >= 1");
  }
  for (auto k : precision) {
    if (k == 0) throw Error(Errc::invalid_args, "precision cutoff must be >= 1");
  }
  if (mrr_depth && *mrr_depth == 0) throw Error(Errc::invalid_args, "MRR depth must be >= 1");
}

std::vector<std::string> MetricCutoffs::metric_names() const {
  std::vector<std::string> names;
  for (auto k : recall) names.push_back("Recall@" + std::to_string(k));
  names.push_back(mrr_depth ? "MRR@" + std::to_string(*mrr_depth) : "MRR");
  for (auto k : precision) names.push_back("P@" + std::to_string(k));
  return names;
}

MetricReport evaluate_run(const RunFile& run, const Qrels& qrels, const MetricCutoffs& cutoffs,
                          const std::vector<std::string>* only) {
  cutoffs.validate();
  MetricReport report;
  report.metrics = cutoffs.metric_names();

  std::vector<std::string> candidates;
  if (only) {
    candidates = *only;
  } else {
    for (const auto& [qid, _] : qrels.judgments) candidates.push_back(qid);
  }

  const RankedList empty_run;
  for (const auto& qid : candidates) {
    const RelevantSet rel = qrels.relevant(qid);
    if (rel.empty()) continue;
    const RankedList* ranking = run.find(qid);
    const RankedList& r = ranking ? *ranking : empty_run;

    auto& values = report.per_query[qid];
    std::size_t col = 0;
    for (auto k : cutoffs.recall) values[report.metrics[col++]] = recall_at_k(r, rel, k);
    values[report.metrics[col++]] = reciprocal_rank(r, rel, cutoffs.mrr_depth);
    for (auto k : cutoffs.precision) values[report.metrics[col++]] = precision_at_k(r, rel, k);
    report.query_ids.push_back(qid);
  }

  for (const auto& m : report.metrics) {
    double sum = 0.0;
    for (const auto& qid : report.query_ids) sum += report.per_query[qid][m];
    report.mean[m] = report.query_ids.empty() ? 0.0 : sum / static_cast<double>(report.query_ids.size());
  }
  return report;
}

std::string MetricReport::to_json(bool per_query_values) const {
  nlohmann::ordered_json j;
  j["queries"] = query_ids.size();
  j["metrics"] = metrics;
  nlohmann::ordered_json means = nlohmann::ordered_json::object();
  for (const auto& m : metrics) means[m] = mean.at(m);
  j["mean"] = means;
  if (per_query_values) {
    nlohmann::ordered_json pq = nlohmann::ordered_json::object();
    for (const auto& qid : query_ids) {
      nlohmann::ordered_json row = nlohmann::ordered_json::object();
      for (const auto& m : metrics) row[m] = per_query.at(qid).at(m);
      pq[qid] = row;
    }
    j["per_query"] = pq;
  }
  return j.dump(2);
}

std::string MetricReport::to_table(bool per_query_rows) const {
  std::size_t id_width = 5;
  if (per_query_rows) {
    for (const auto& q : query_ids) id_width = std::max(id_width, q.size());
  }
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(id_width)) << "query";
  for (const auto& m : metrics) out << "  " << std::right << std::setw(std::max<int>(11, static_cast<int>(m.size()))) << m;
  out << '\n';
  const auto row = [&](const std::string& label, const std::map<std::string, double>& values) {
    out << std::left << std::setw(static_cast<int>(id_width)) << label;
    for (const auto& m : metrics) {
      out << "  " << std::right << std::setw(std::max<int>(11, static_cast<int>(m.size()))) << std::fixed
          << std::setprecision(4) << values.at(m);
    }
    out << '\n';
  };
  if (per_query_rows) {
    for (const auto& q : query_ids) row(q, per_query.at(q));
  }
  row("all", mean);
  out << "evaluated queries: " << query_ids.size() << '\n';
  return out.str();
}

}  // namespace shardsearch
