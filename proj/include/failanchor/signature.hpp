#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace failanchor {

enum class InfraClass { none, timeout, connection, out_of_memory, container, platform };

std::string_view to_string(InfraClass c) noexcept;
std::optional<InfraClass> parse_infra_class(std::string_view s) noexcept;

// Run-specific literals removed from a message, kept so later stages can name
// concrete targets without re-parsing raw text.
struct MaskedLiterals {
  std::vector<std::string> paths;
  std::vector<std::string> endpoints;  // host part of host:port pairs
};

struct ErrorSignature {
  std::string canonical;
  std::string raw_hash;
  InfraClass infra_class = InfraClass::none;
  MaskedLiterals masked;
};

// Placeholders written into canonical text.
inline constexpr std::string_view kPathToken = "<PATH>";
inline constexpr std::string_view kUrlToken = "<URL>";
inline constexpr std::string_view kIdToken = "<ID>";
inline constexpr std::string_view kNumToken = "<NUM>";
inline constexpr std::string_view kStrToken = "<STR>";

// Masks absolute paths, URLs, host:port endpoints, hexadecimal ids, integers of
// three or more digits and quoted literals. Idempotent on its own output.
// Throws Error(empty_input) on empty or all-whitespace input.
ErrorSignature canonicalize_error(std::string_view raw);

InfraClass classify_infra(std::string_view raw);

// Lowercase and collapse runs of whitespace to one space, trimming both ends.
std::string normalize_key(std::string_view text);
std::string collapse_whitespace(std::string_view text);

}  // namespace failanchor
