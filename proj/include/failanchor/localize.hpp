#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "failanchor/config.hpp"
#include "failanchor/metrics.hpp"
#include "failanchor/signature.hpp"
#include "failanchor/wire.hpp"

namespace failanchor {

enum class FindingKind {
  metric_anomaly,
  aggregate_metric_anomaly,
  execution_error,
  repeated_failure,
  intent_surprise,
  pattern_summary,
  outcome_mismatch,
  infrastructure_clue,
  state_mismatch,
};

enum class AnchorCategory {
  tool,
  argument_fingerprint,
  error_signature,
  return_code,
  metric,
  check,
  artifact,
  intent,
  run,
};

enum class SourceFamily { metrics, logs, traces, intent, env, outcome };

enum class Severity { low = 0, medium = 1, high = 2 };

std::string_view to_string(FindingKind k) noexcept;
std::string_view to_string(AnchorCategory c) noexcept;
std::string_view to_string(SourceFamily f) noexcept;
std::string_view to_string(Severity s) noexcept;
std::optional<FindingKind> parse_finding_kind(std::string_view s) noexcept;
std::optional<AnchorCategory> parse_anchor_category(std::string_view s) noexcept;
std::optional<SourceFamily> parse_source_family(std::string_view s) noexcept;
std::optional<Severity> parse_severity(std::string_view s) noexcept;

struct Anchor {
  // Lowercased, whitespace-collapsed.
  std::string key;
  AnchorCategory category = AnchorCategory::run;
  // Tool the anchored event belongs to, when there is one. Two anchors that
  // share a tool can be fused on time overlap.
  std::string tool;

  friend bool operator==(const Anchor&, const Anchor&) = default;
};

Anchor make_anchor(std::string_view key, AnchorCategory category, std::string_view tool = {});

struct StepRange {
  std::int64_t start = 0;
  std::int64_t end = 0;

  bool overlaps(const StepRange& o) const noexcept { return start <= o.end && o.start <= end; }
  friend bool operator==(const StepRange&, const StepRange&) = default;
};

// Detector-specific facts carried alongside a finding. Fields a detector does
// not know about stay empty.
struct FindingDetail {
  std::string signature;  // canonical error template
  InfraClass infra_class = InfraClass::none;
  std::string check;
  bool success_claim = false;
  std::string state_key;  // original spelling
  std::string expected;
  std::string actual;
  std::vector<std::string> paths;
  std::vector<std::string> services;
  std::string summary;

  friend bool operator==(const FindingDetail&, const FindingDetail&) = default;
};

struct LocalizedFinding {
  FindingKind kind = FindingKind::pattern_summary;
  Anchor anchor;
  SourceFamily source_family = SourceFamily::traces;
  StepRange step_range;
  Severity severity = Severity::low;
  double score = 0.0;
  std::vector<std::string> evidence_refs;
  FindingDetail detail;

  friend bool operator==(const LocalizedFinding&, const LocalizedFinding&) = default;
};

// Robust-z plus empirical-quantile tail test on one metric series. Empty for
// series shorter than cfg.min_series_len or constant series.
std::vector<LocalizedFinding> detect_metric_anomalies(const MetricSeries& series,
                                                      const LocalizeConfig& cfg);

// Isolation-forest scoring of the window vectors; returns the single most
// anomalous window. Absent below four windows.
std::optional<LocalizedFinding> detect_aggregate_anomaly(const std::vector<MetricWindow>& windows,
                                                         const LocalizeConfig& cfg,
                                                         std::uint64_t seed);

std::vector<LocalizedFinding> group_error_findings(const TelemetryBundle& bundle);

// -log2 P(label_t | label_{t-1}) for t = 1..n-1 under an add-one smoothed
// bigram model fitted on the sequence itself, with the vocabulary taken as the
// labels that occur in it.
std::vector<double> transition_surprise(const std::vector<IntentLabel>& labels);

std::vector<LocalizedFinding> score_intent_transitions(const std::vector<IntentAnnotation>& intent,
                                                       const LocalizeConfig& cfg);

std::vector<LocalizedFinding> detect_repeated_failures(const TelemetryBundle& bundle,
                                                       const LocalizeConfig& cfg);

std::vector<LocalizedFinding> detect_state_mismatches(const TelemetryBundle& bundle);

// Throws Error(no_outcome_family) when the bundle has no outcome family.
std::vector<LocalizedFinding> outcome_findings(const TelemetryBundle& bundle,
                                               const LocalizeConfig& cfg);

// Structural digest of the run: intent histogram, last verification, outcome.
LocalizedFinding summarize_pattern(const TelemetryBundle& bundle);

// Runs every detector and merges the results by stable sort on
// (kind, anchor key, start step). Requires bundle.metrics to be populated.
std::vector<LocalizedFinding> localize(const TelemetryBundle& bundle, const LocalizeConfig& cfg);

// Anchor key used for outcomes without named failing checks.
inline constexpr std::string_view kRunUnresolvedKey = "run-unresolved";

}  // namespace failanchor
