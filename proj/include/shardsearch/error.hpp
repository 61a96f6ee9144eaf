#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace shardsearch {

/// Failure categories shared by every module. Each thrown `Error` carries one.
enum class Errc {
  malformed_json,
  missing_field,
  invalid_segment,
  invalid_args,
  out_of_range,
  duplicate_doc_id,
  io_error,
  invalid_stats,
  not_committed,
  not_found,
  dimension_mismatch,
  duplicate_id,
  non_finite_value,
  corrupt_file,
  duplicate_across_shards,
  all_shards_failed,
  empty_samples,
  scorer_failure,
  upstream,
  shape_mismatch,
  timeout,
  retrieval_failure,
  missing_ranking,
  no_relevant,
  format_error,
  invalid_config,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Non-200 answer from a remote service.
class UpstreamError : public Error {
 public:
  UpstreamError(int status, std::string body)
      : Error(Errc::upstream, "status " + std::to_string(status) + ": " + body),
        status_(status),
        body_(std::move(body)) {}

  int status() const noexcept { return status_; }
  const std::string& body() const noexcept { return body_; }

 private:
  int status_;
  std::string body_;
};

}  // namespace shardsearch
