#include "shardsearch/error.hpp"

namespace shardsearch {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::malformed_json: return "MalformedJson";
    case Errc::missing_field: return "MissingField";
    case Errc::invalid_segment: return "InvalidSegment";
    case Errc::invalid_args: return "InvalidArgs";
    case Errc::out_of_range: return "OutOfRange";
    case Errc::duplicate_doc_id: return "DuplicateDocId";
    case Errc::io_error: return "IoError";
    case Errc::invalid_stats: return "InvalidStats";
    case Errc::not_committed: return "NotCommitted";
    case Errc::not_found: return "NotFound";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::duplicate_id: return "DuplicateId";
    case Errc::non_finite_value: return "NonFiniteValue";
    case Errc::corrupt_file: return "CorruptFile";
    case Errc::duplicate_across_shards: return "DuplicateAcrossShards";
    case Errc::all_shards_failed: return "AllShardsFailed";
    case Errc::empty_samples: return "EmptySamples";
    case Errc::scorer_failure: return "ScorerFailure";
    case Errc::upstream: return "Upstream";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::timeout: return "Timeout";
    case Errc::retrieval_failure: return "RetrievalFailure";
    case Errc::missing_ranking: return "MissingRanking";
    case Errc::no_relevant: return "NoRelevant";
    case Errc::format_error: return "FormatError";
    case Errc::invalid_config: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace shardsearch
