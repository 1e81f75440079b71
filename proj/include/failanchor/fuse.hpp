#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "failanchor/localize.hpp"

namespace failanchor {

struct EvidenceUnit {
  Anchor anchor;
  SourceFamily source = SourceFamily::traces;
  StepRange time_scope;
  Severity severity = Severity::low;
  std::vector<std::string> evidence_ref;
  FindingKind origin_kind = FindingKind::pattern_summary;
  double score = 0.0;
  FindingDetail detail;

  friend bool operator==(const EvidenceUnit&, const EvidenceUnit&) = default;
};

inline constexpr std::string_view kClaimVsEvaluator = "claim-vs-evaluator";

struct Conflict {
  EvidenceUnit first;
  EvidenceUnit second;
  std::string reason;

  friend bool operator==(const Conflict&, const Conflict&) = default;
};

struct FusedEvidenceRecord {
  std::string record_id;
  Anchor anchor;
  // Kind of the unit the anchor was taken from.
  FindingKind anchor_kind = FindingKind::pattern_summary;
  std::set<SourceFamily> sources;
  StepRange time_scope;
  Severity severity = Severity::low;
  std::vector<EvidenceUnit> support;
  std::vector<Conflict> conflicts;

  const EvidenceUnit& lead() const;
  std::vector<std::string> evidence_refs() const;
  bool has_kind(FindingKind k) const;

  friend bool operator==(const FusedEvidenceRecord&, const FusedEvidenceRecord&) = default;
};

EvidenceUnit normalize_finding(const LocalizedFinding& finding);

// Groups units that share an anchor key, share a tool over overlapping steps,
// or carry the same error signature; returns records in canonical order
// (severity desc, support size desc, earliest step, anchor key).
std::vector<FusedEvidenceRecord> fuse(const std::vector<EvidenceUnit>& units);

const FusedEvidenceRecord* find_record(const std::vector<FusedEvidenceRecord>& records,
                                       std::string_view record_id);

// Content hash of the anchor key and sorted evidence refs.
std::string record_id_for(const Anchor& anchor, std::vector<std::string> refs);

}  // namespace failanchor
