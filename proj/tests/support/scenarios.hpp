// Fixture generators shared by the unit tests and the acceptance runner.
#pragma once

#include <algorithm>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "failanchor/diagnose.hpp"
#include "failanchor/fuse.hpp"
#include "failanchor/gate.hpp"
#include "failanchor/localize.hpp"
#include "failanchor/wire.hpp"

namespace scenarios {

namespace fa = failanchor;

inline fa::EvidenceUnit unit(fa::FindingKind kind, const std::string& key, fa::AnchorCategory cat,
                             const std::string& tool, fa::StepRange steps, fa::Severity sev,
                             std::vector<std::string> refs, fa::SourceFamily source,
                             fa::FindingDetail detail = {}) {
  fa::LocalizedFinding f;
  f.kind = kind;
  f.anchor = fa::make_anchor(key, cat, tool);
  f.source_family = source;
  f.step_range = steps;
  f.severity = sev;
  f.score = 1.0;
  f.evidence_refs = std::move(refs);
  f.detail = std::move(detail);
  return fa::normalize_finding(f);
}

// ---------------------------------------------------------------------------
// Isolation-forest planting fixture: 20 windows jittered around one vector and
// a 21st window far from all of them.

inline constexpr std::size_t kPlantedIndex = 13;

inline std::vector<fa::MetricWindow> planted_windows(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 7);
  std::vector<fa::MetricWindow> ws;
  for (std::size_t i = 0; i < 21; ++i) {
    fa::MetricWindow w;
    w.start_step = static_cast<std::int64_t>(i * 4);
    w.end_step = w.start_step + 7;
    w.span_ids = {"w" + std::to_string(i)};
    for (auto& v : w.values) v = 0.5 + static_cast<double>(rng() % 1000) * 1e-5;
    ws.push_back(std::move(w));
  }
  for (auto& v : ws[kPlantedIndex].values) v += 4.0 + static_cast<double>(rng() % 100) * 1e-3;
  return ws;
}

// ---------------------------------------------------------------------------
// Random evidence units for fusion properties. Small key and tool pools so
// that merges actually happen.

inline fa::EvidenceUnit random_unit(std::mt19937_64& rng, int serial) {
  static const char* keys[] = {"alpha", "beta", "gamma", "delta", "epsilon", "zeta"};
  static const char* tools[] = {"", "", "bash", "kubectl", "pytest"};
  static const char* sigs[] = {"", "", "boom <NUM>", "connection refused", "no such file <PATH>"};
  const auto kind = static_cast<fa::FindingKind>(rng() % 9);
  const auto cat = static_cast<fa::AnchorCategory>(rng() % 9);
  const auto start = static_cast<std::int64_t>(rng() % 30);
  const fa::StepRange steps{start, start + static_cast<std::int64_t>(rng() % 6)};
  const auto sev = static_cast<fa::Severity>(rng() % 3);
  const auto src = static_cast<fa::SourceFamily>(rng() % 6);
  std::vector<std::string> refs;
  for (int k = 0, n = 1 + static_cast<int>(rng() % 3); k < n; ++k) {
    refs.push_back("s" + std::to_string(serial) + "." + std::to_string(k));
  }
  fa::FindingDetail d;
  d.signature = sigs[rng() % 5];
  if (kind == fa::FindingKind::outcome_mismatch) {
    d.check = keys[rng() % 6];
    d.success_claim = rng() % 3 == 0;
  }
  return unit(kind, keys[rng() % 6], cat, tools[rng() % 5], steps, sev, std::move(refs), src, d);
}

inline std::vector<fa::EvidenceUnit> random_units(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<fa::EvidenceUnit> units;
  const int n = static_cast<int>(rng() % 25);
  for (int i = 0; i < n; ++i) units.push_back(random_unit(rng, i));
  return units;
}

// ---------------------------------------------------------------------------
// Gate truth table: two evidence shapes for each actionability class, each
// diagnosed once with resolving citations and once with dangling ones.

enum class Shape { actionable, missing_field, infra_dominated };

struct GateCase {
  std::string name;
  std::vector<fa::FusedEvidenceRecord> records;
  fa::StructuredDiagnosis diagnosis;
  bool expect_injectable = false;
  std::optional<fa::NonInjectableReason> expect_reason;
};

struct Evidence {
  std::string name;
  Shape shape;
  std::vector<fa::EvidenceUnit> units;
  // Anchor key of the unit the diagnosis should blame.
  std::string cause_key;
};

inline std::vector<Evidence> gate_evidence() {
  using K = fa::FindingKind;
  using C = fa::AnchorCategory;
  using F = fa::SourceFamily;
  using S = fa::Severity;
  std::vector<Evidence> out;

  {
    fa::FindingDetail mismatch;
    mismatch.state_key = "orders-api.replicas";
    mismatch.expected = "3";
    mismatch.actual = "1";
    mismatch.paths = {"deploy/orders-api.yaml"};
    mismatch.services = {"orders-api"};
    fa::FindingDetail check;
    check.check = "orders-smoke";
    out.push_back({"state-mismatch",
                   Shape::actionable,
                   {unit(K::state_mismatch, "orders-api.replicas", C::artifact, "", {4, 4}, S::high, {"e:4"}, F::env,
                         mismatch),
                    unit(K::outcome_mismatch, "orders-smoke", C::check, "", {9, 9}, S::high, {"e:9"}, F::outcome,
                         check)},
                   "orders-api.replicas"});
  }
  {
    fa::FindingDetail err;
    err.signature = "make: *** [all] Error <NUM>";
    fa::FindingDetail check;
    check.check = "build";
    out.push_back({"repeated-failure",
                   Shape::actionable,
                   {unit(K::repeated_failure, "bash make all", C::argument_fingerprint, "bash", {2, 5}, S::high,
                         {"r:2", "r:3", "r:5"}, F::traces),
                    unit(K::execution_error, "make: *** [all] error <num>", C::error_signature, "bash", {2, 5},
                         S::high, {"r:2b", "r:3b", "r:5b"}, F::logs, err),
                    unit(K::outcome_mismatch, "build", C::check, "", {8, 8}, S::high, {"r:8"}, F::outcome, check)},
                   "bash make all"});
  }
  out.push_back({"intent-only",
                 Shape::missing_field,
                 {unit(K::intent_surprise, "gather_evidence->prepare_submission", C::intent, "", {3, 4}, S::medium,
                       {"i:4"}, F::intent)},
                 "gather_evidence->prepare_submission"});
  {
    fa::FindingDetail unresolved;
    out.push_back({"metric-only",
                   Shape::missing_field,
                   {unit(K::metric_anomaly, "retry_dominance", C::metric, "", {8, 15}, S::high, {"m:8", "m:9"},
                         F::metrics),
                    unit(K::outcome_mismatch, "run-unresolved", C::run, "", {16, 16}, S::high, {"m:16"}, F::outcome,
                         unresolved)},
                   "retry_dominance"});
  }
  {
    fa::FindingDetail outage;
    outage.signature = "upstream platform outage: service unavailable";
    outage.infra_class = fa::InfraClass::platform;
    fa::FindingDetail check;
    check.check = "e2e";
    out.push_back({"platform-outage",
                   Shape::infra_dominated,
                   {unit(K::infrastructure_clue, "upstream platform outage: service unavailable", C::error_signature,
                         "deploy", {6, 6}, S::high, {"p:6"}, F::env, outage),
                    unit(K::outcome_mismatch, "e2e", C::check, "", {12, 12}, S::high, {"p:12"}, F::outcome, check)},
                   "upstream platform outage: service unavailable"});
  }
  {
    fa::FindingDetail oom;
    oom.signature = "worker exited: out of memory (oomkilled)";
    oom.infra_class = fa::InfraClass::out_of_memory;
    out.push_back({"out-of-memory",
                   Shape::infra_dominated,
                   {unit(K::execution_error, "worker exited: out of memory (oomkilled)", C::error_signature,
                         "pytest", {7, 7}, S::high, {"o:7"}, F::logs, oom),
                    unit(K::infrastructure_clue, "worker exited: out of memory (oomkilled)", C::error_signature,
                         "pytest", {7, 7}, S::high, {"o:7"}, F::env, oom)},
                   "worker exited: out of memory (oomkilled)"});
  }
  return out;
}

inline std::vector<GateCase> gate_matrix() {
  std::vector<GateCase> cases;
  for (const auto& ev : gate_evidence()) {
    const auto records = fa::fuse(ev.units);
    const fa::FusedEvidenceRecord* cause = nullptr;
    for (const auto& r : records) {
      for (const auto& u : r.support) {
        if (u.anchor.key == ev.cause_key) cause = &r;
      }
    }
    for (bool grounded : {true, false}) {
      GateCase c;
      c.name = ev.name + (grounded ? "/grounded" : "/ungrounded");
      c.records = records;
      const std::string id = grounded && cause != nullptr ? cause->record_id : "rec-000000000000";
      c.diagnosis.primary_cause = {"the cause is " + ev.cause_key, {id}};
      c.diagnosis.failure_anchor = {cause != nullptr ? cause->anchor : fa::Anchor{}, {id}};
      c.diagnosis.behavioral_mistake = {std::string(fa::mistake::unverified_stop), {}};
      c.diagnosis.evidence_summary = "fixture";
      c.diagnosis.confidence = 0.5;
      if (!grounded) {
        c.expect_reason = fa::NonInjectableReason::ungrounded;
      } else if (ev.shape == Shape::actionable) {
        c.expect_injectable = true;
      } else if (ev.shape == Shape::missing_field) {
        c.expect_reason = fa::NonInjectableReason::not_actionable;
      } else {
        c.expect_reason = fa::NonInjectableReason::out_of_scope;
      }
      cases.push_back(std::move(c));
    }
  }
  return cases;
}

// ---------------------------------------------------------------------------
// Random wire records.

inline fa::Span random_span(std::mt19937_64& rng, std::size_t i) {
  static const std::vector<std::string> pieces = {"a", "b", "Z", "0", " ", "_", "/", ":", "{", "}",
                                                  "\"", "\\", "\n", "\t", "\x01", "\xC3\xA9", "\xE2\x9C\x93"};
  fa::Span s;
  s.span_id = "rt-" + std::to_string(i);
  if (i > 0 && rng() % 3 == 0) s.parent_id = "rt-" + std::to_string(rng() % i);
  s.step = static_cast<std::int64_t>(i / 4);
  s.ts_ms = 1'700'000'000'000 + static_cast<std::int64_t>(i) * 13 + static_cast<std::int64_t>(rng() % 7);
  s.event = static_cast<fa::EventType>(rng() % 10);
  s.status = static_cast<fa::SpanStatus>(rng() % 4);
  for (std::size_t k = 0, len = rng() % 64; k < len; ++k) s.payload += pieces[rng() % pieces.size()];
  if (rng() % 4 == 0) s.payload += "\xE2\x9C\x93";
  s.meta = nlohmann::json::object();
  if (rng() % 2) s.meta["tool"] = "tool_" + std::to_string(rng() % 6);
  if (rng() % 2) s.meta["prompt_tokens"] = static_cast<std::int64_t>(rng() % 200000);
  if (rng() % 4 == 0) s.meta["ratio"] = static_cast<double>(rng() % 10000) / 37.0;
  if (rng() % 5 == 0) s.meta["failing_checks"] = nlohmann::json::array({"a", "b"});
  if (rng() % 6 == 0) s.meta["nested"] = {{"k", rng() % 2 == 0}, {"v", nullptr}};
  if (rng() % 10 == 0) s.extra["x_vendor"] = "v" + std::to_string(rng() % 3);
  return s;
}

}  // namespace scenarios
