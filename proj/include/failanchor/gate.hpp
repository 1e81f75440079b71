#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "failanchor/config.hpp"
#include "failanchor/diagnose.hpp"
#include "failanchor/fuse.hpp"

namespace failanchor {

enum class EntityKind { path = 0, service = 1, tool = 2, check = 3 };
std::string_view to_string(EntityKind k) noexcept;

struct Entity {
  EntityKind kind = EntityKind::path;
  std::string name;

  friend auto operator<=>(const Entity&, const Entity&) = default;
};

// Concrete names a record's evidence supports, most specific kind first.
std::vector<Entity> record_entities(const FusedEvidenceRecord& record);

// Names a diagnosis mentions in its free text: quoted names, paths,
// host:port hosts and hyphenated service-style names.
std::vector<std::string> mentioned_entities(const StructuredDiagnosis& d);

struct GroundingVerdict {
  bool grounded = false;
  std::string reason;
  // Mentioned names with evidence behind them.
  std::vector<std::string> supported_entities;
  // Mentioned names no supporting record backs; never used as targets.
  std::vector<std::string> stripped_entities;
};

GroundingVerdict grounding_check(const StructuredDiagnosis& d,
                                 const std::vector<FusedEvidenceRecord>& records);

enum class Actionability { actionable, not_actionable, out_of_scope };
std::string_view to_string(Actionability a) noexcept;

struct ActionFields {
  std::string target;
  std::string target_record_id;
  std::string operation;
  std::string verification_signal;
  std::string boundary_condition;
};

struct ActionabilityVerdict {
  Actionability status = Actionability::not_actionable;
  ActionFields fields;
  std::vector<std::string> missing_fields;
  std::string reason;
};

ActionabilityVerdict actionability_filter(const StructuredDiagnosis& d,
                                          const std::vector<FusedEvidenceRecord>& records,
                                          const GroundingVerdict& grounding, const GateConfig& cfg);

enum class NonInjectableReason { ungrounded, not_actionable, out_of_scope };
std::string_view to_string(NonInjectableReason r) noexcept;
std::optional<NonInjectableReason> parse_non_injectable_reason(std::string_view s) noexcept;

// The only hints a non-injectable guidance may carry.
inline constexpr std::array<std::string_view, 3> kConservativeHints = {
    "re-check evidence", "rerun verification", "avoid premature submission"};

struct RecoveryGuidance {
  bool injectable = false;
  std::string target;
  std::string target_record_id;
  std::string operation;
  std::string verification_signal;
  std::string boundary_condition;
  std::optional<NonInjectableReason> non_injectable_reason;
  std::vector<std::string> conservative_hints;
  // Cause and mistake lines; first to go after citations when space is short.
  std::vector<std::string> contributing_detail;
  // Records the hint may cite, most relevant first.
  std::vector<std::string> citation_ids;

  friend bool operator==(const RecoveryGuidance&, const RecoveryGuidance&) = default;
};

RecoveryGuidance construct_guidance(const StructuredDiagnosis& d, const GroundingVerdict& grounding,
                                    const ActionabilityVerdict& action);

struct HintBlock {
  std::string text;
  int token_estimate = 0;
  std::vector<std::string> cited_record_ids;
};

inline constexpr int kMinHintBudget = 100;

// ceil(code points / 4).
int estimate_tokens(std::string_view text);

// Throws Error(budget_too_small) for budgets below kMinHintBudget.
HintBlock format_hint(const RecoveryGuidance& g, const std::vector<FusedEvidenceRecord>& records,
                      int budget_tokens, std::size_t max_citations = 3);

struct GateResult {
  GroundingVerdict grounding;
  ActionabilityVerdict action;
  RecoveryGuidance guidance;
  HintBlock hint;
};

GateResult run_gate(const StructuredDiagnosis& d, const std::vector<FusedEvidenceRecord>& records,
                    const GateConfig& cfg);

}  // namespace failanchor
