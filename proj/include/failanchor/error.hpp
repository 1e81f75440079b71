#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace failanchor {

enum class ErrorCode {
  malformed_record,
  ordering_violation,
  duplicate_span_id,
  sink_unwritable,
  invalid_config,
  unknown_metric,
  empty_input,
  no_outcome_family,
  schema_violation,
  unsupported_anchor,
  no_evidence,
  budget_too_small,
  unknown_category,
  invalid_report,
  backend_failure,
};

std::string_view error_code_name(ErrorCode code) noexcept;

// Every recoverable failure in the library is raised as this type. The code is
// what callers branch on; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace failanchor
