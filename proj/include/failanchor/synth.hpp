#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "failanchor/wire.hpp"

namespace failanchor {

// Failure-cause categories a synthetic run can be seeded with.
enum class FailureCategory {
  insufficient_validation,
  tool_subprocess,
  state_workflow,
  patch_submission,
  retry_no_progress,
  runtime_environment,
};

inline constexpr std::array<FailureCategory, 6> kAllCategories = {
    FailureCategory::insufficient_validation, FailureCategory::tool_subprocess,
    FailureCategory::state_workflow,          FailureCategory::patch_submission,
    FailureCategory::retry_no_progress,       FailureCategory::runtime_environment,
};

std::string_view to_string(FailureCategory c) noexcept;
// Throws Error(unknown_category).
FailureCategory parse_category(std::string_view name);

// A failed run exhibiting the category's pattern, ending in an unresolved
// outcome. Same (category, seed) always gives the same spans.
std::vector<Span> synthesize_run(FailureCategory category, std::uint64_t seed);

}  // namespace failanchor
