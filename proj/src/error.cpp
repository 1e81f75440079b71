#include "failanchor/error.hpp"

namespace failanchor {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::malformed_record: return "malformed-record";
    case ErrorCode::ordering_violation: return "ordering-violation";
    case ErrorCode::duplicate_span_id: return "duplicate-span-id";
    case ErrorCode::sink_unwritable: return "sink-unwritable";
    case ErrorCode::invalid_config: return "invalid-config";
    case ErrorCode::unknown_metric: return "unknown-metric";
    case ErrorCode::empty_input: return "empty-input";
    case ErrorCode::no_outcome_family: return "no-outcome-family";
    case ErrorCode::schema_violation: return "schema-violation";
    case ErrorCode::unsupported_anchor: return "unsupported-anchor";
    case ErrorCode::no_evidence: return "no-evidence";
    case ErrorCode::budget_too_small: return "budget-too-small";
    case ErrorCode::unknown_category: return "unknown-category";
    case ErrorCode::invalid_report: return "invalid-report";
    case ErrorCode::backend_failure: return "backend-failure";
  }
  return "error";
}

}  // namespace failanchor
