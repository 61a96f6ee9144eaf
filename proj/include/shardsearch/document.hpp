#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace shardsearch {

/// Unit of ingestion, indexing and storage.
struct Document {
  std::string id;
  std::int64_t segment = 0;
  std::string url;
  std::string title;
  std::string body;

  friend bool operator==(const Document&, const Document&) = default;
};

/// Parses one JSON-lines corpus record. Unknown fields are ignored; `url`
/// and `title` may be empty but must be present.
///
/// Throws Error{malformed_json | missing_field | invalid_segment}.
Document parse_document(std::string_view line);

/// Inverse of parse_document: one JSON object, no trailing newline.
std::string serialize_document(const Document& doc);

/// Streams every document of a `.jsonl` (or `.jsonl.gz`) corpus file into
/// `sink`. Blank lines are skipped; parse failures are rethrown with the line
/// number attached.
void read_corpus(const std::filesystem::path& path, const std::function<void(Document&&)>& sink);

std::vector<Document> load_corpus(const std::filesystem::path& path);

/// Inclusive segment range covered by one partition.
struct SegmentRange {
  std::int64_t first = 0;
  std::int64_t last = 0;

  friend bool operator==(const SegmentRange&, const SegmentRange&) = default;
};

/// Contiguous split of segments 0..num_segments-1 into partitions.
struct PartitionPlan {
  std::int64_t num_segments = 0;
  std::vector<SegmentRange> ranges;

  std::size_t size() const noexcept { return ranges.size(); }
};

/// The first num_segments % num_partitions partitions take one segment more
/// than the rest, so no partition is empty. (47, 4) gives 0-11, 12-23, 24-35,
/// 36-46.
///
/// Throws Error{invalid_args} unless 0 < num_partitions <= num_segments.
PartitionPlan make_partition_plan(std::int64_t num_segments, std::int64_t num_partitions);

/// Index of the range holding `segment`. Throws Error{out_of_range}.
std::size_t assign_partition(std::int64_t segment, const PartitionPlan& plan);

}  // namespace shardsearch
