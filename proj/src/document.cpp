#include "shardsearch/document.hpp"

#include <zlib.h>

#include <fstream>
#include <nlohmann/json.hpp>

#include "shardsearch/error.hpp"

namespace shardsearch {
namespace {

using nlohmann::json;

const json& require(const json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end() || it->is_null()) throw Error(Errc::missing_field, name);
  return *it;
}

std::string require_string(const json& obj, const char* name) {
  const json& v = require(obj, name);
  if (!v.is_string()) throw Error(Errc::malformed_json, std::string("field '") + name + "' is not a string");
  return v.get<std::string>();
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Reads lines from a gzip file; zlib also passes plain files through unchanged.
class GzLineReader {
 public:
  explicit GzLineReader(const std::filesystem::path& path) : file_(gzopen(path.c_str(), "rb")) {
    if (file_ == nullptr) throw Error(Errc::io_error, "cannot open " + path.string());
  }
  GzLineReader(const GzLineReader&) = delete;
  GzLineReader& operator=(const GzLineReader&) = delete;
  ~GzLineReader() { gzclose(file_); }

  bool getline(std::string& line) {
    line.clear();
    char buf[1 << 16];
    while (gzgets(file_, buf, sizeof(buf)) != nullptr) {
      line.append(buf);
      if (!line.empty() && line.back() == '\n') {
        line.pop_back();
        return true;
      }
    }
    int err = 0;
    gzerror(file_, &err);
    if (err != Z_OK && err != Z_STREAM_END) throw Error(Errc::io_error, "gzip read failure");
    return !line.empty();
  }

 private:
  gzFile file_;
};

}  // namespace

Document parse_document(std::string_view line) {
  json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (obj.is_discarded() || !obj.is_object()) throw Error(Errc::malformed_json, "record is not a JSON object");

  Document doc;
  doc.id = require_string(obj, "id");
  if (doc.id.empty()) throw Error(Errc::missing_field, "id");

  const json& seg = require(obj, "segment");
  if (!seg.is_number_integer()) throw Error(Errc::malformed_json, "field 'segment' is not an integer");
  doc.segment = seg.get<std::int64_t>();
  if (doc.segment < 0) throw Error(Errc::invalid_segment, std::to_string(doc.segment));

  doc.url = require_string(obj, "url");
  doc.title = require_string(obj, "title");
  doc.body = require_string(obj, "body");
  return doc;
}

std::string serialize_document(const Document& doc) {
  json obj = {{"id", doc.id}, {"segment", doc.segment}, {"url", doc.url}, {"title", doc.title}, {"body", doc.body}};
  return obj.dump();
}

void read_corpus(const std::filesystem::path& path, const std::function<void(Document&&)>& sink) {
  const auto report = [&](std::size_t line_no, const Error& e) {
    return Error(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
  };
  std::string line;
  std::size_t line_no = 0;
  if (ends_with(path.string(), ".gz")) {
    GzLineReader reader(path);
    while (reader.getline(line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        sink(parse_document(line));
      } catch (const Error& e) {
        throw report(line_no, e);
      }
    }
    return;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      sink(parse_document(line));
    } catch (const Error& e) {
      throw report(line_no, e);
    }
  }
  if (in.bad()) throw Error(Errc::io_error, "read failure on " + path.string());
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
  std::vector<Document> docs;
  read_corpus(path, [&](Document&& d) { docs.push_back(std::move(d)); });
  return docs;
}

PartitionPlan make_partition_plan(std::int64_t num_segments, std::int64_t num_partitions) {
  if (num_segments <= 0 || num_partitions <= 0 || num_partitions > num_segments) {
    throw Error(Errc::invalid_args, "need 0 < partitions <= segments, got segments=" + std::to_string(num_segments) +
                                        " partitions=" + std::to_string(num_partitions));
  }
  const std::int64_t small = num_segments / num_partitions;
  const std::int64_t wide = num_segments % num_partitions;  // partitions that get one extra segment

  PartitionPlan plan;
  plan.num_segments = num_segments;
  std::int64_t next = 0;
  for (std::int64_t p = 0; p < num_partitions; ++p) {
    const std::int64_t width = small + (p < wide ? 1 : 0);
    plan.ranges.push_back({next, next + width - 1});
    next += width;
  }
  return plan;
}

std::size_t assign_partition(std::int64_t segment, const PartitionPlan& plan) {
  if (segment < 0 || segment >= plan.num_segments) {
    throw Error(Errc::out_of_range, "segment " + std::to_string(segment) + " outside 0.." +
                                        std::to_string(plan.num_segments - 1));
  }
  // Ranges are ascending and contiguous.
  std::size_t lo = 0;
  std::size_t hi = plan.ranges.size();
  while (lo + 1 < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (plan.ranges[mid].first <= segment) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

}  // namespace shardsearch
