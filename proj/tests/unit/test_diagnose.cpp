#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "failanchor/config.hpp"
#include "failanchor/diagnose.hpp"
#include "failanchor/error.hpp"
#include "failanchor/metrics.hpp"
#include "failanchor/pipeline.hpp"
#include "failanchor/wire.hpp"
#include "helpers.hpp"
#include "scenarios.hpp"

namespace fa = failanchor;
using nlohmann::json;
using testutil::Trace;

namespace {

fa::TelemetryBundle bundle_of(const std::vector<fa::Span>& spans) {
  auto b = fa::build_bundle(spans, false);
  b.metrics = fa::compute_windows(b, {});
  return b;
}

std::vector<fa::FusedEvidenceRecord> records_of(const fa::TelemetryBundle& b) {
  std::vector<fa::EvidenceUnit> units;
  for (const auto& f : fa::localize(b, {})) units.push_back(fa::normalize_finding(f));
  return fa::fuse(units);
}

std::vector<fa::Span> golden() {
  return fa::read_trace_file(std::string(FIXTURE_DIR) + "/targetport_case.jsonl", {}).spans;
}

// Backend returning a fixed object.
class StubBackend : public fa::DiagnosisBackend {
 public:
  explicit StubBackend(json out) : out_(std::move(out)) {}
  json diagnose(const fa::DiagnosisContext& ctx) override {
    ++calls;
    seen_records = ctx.records.size();
    return out_;
  }
  std::string name() const override { return "stub"; }
  int calls = 0;
  std::size_t seen_records = 0;

 private:
  json out_;
};

json raw_for(const std::string& id) {
  return {{"primary_cause", {{"text", "the port is wrong"}, {"record_ids", {id}}}},
          {"failure_anchor", {{"key", "x"}, {"category", "check"}, {"record_ids", {id}}}},
          {"behavioral_mistake", {{"text", "submitted early"}, {"record_ids", json::array()}}},
          {"contributing_factors", json::array()},
          {"evidence_summary", "short"},
          {"confidence", 0.8}};
}

}  // namespace

TEST_CASE("fallback on a single kubectl connection failure") {
  Trace t;
  t.model(1);
  t.tool(1, "kubectl", "kubectl get pods", fa::SpanStatus::error, "dial tcp 10.1.1.1:443: connection refused");
  const auto b = bundle_of(t.spans);
  const auto d = fa::fallback_diagnose(records_of(b), b, {});
  CHECK(d.primary_cause.text == "tool 'kubectl' repeatedly failed with connection errors");
  CHECK(d.confidence == 0.3);
  CHECK(d.origin == fa::DiagnosisOrigin::fallback);
}

TEST_CASE("fallback cause templates") {
  Trace t;
  for (int s = 1; s <= 3; ++s) t.tool(s, "pytest", "-x", fa::SpanStatus::error, "E   assert 1 == 2");
  t.outcome(4, {"unit"});
  auto b = bundle_of(t.spans);
  auto d = fa::fallback_diagnose(records_of(b), b, {});
  CHECK(d.primary_cause.text == "action 'pytest -x' retried without progress");
  CHECK(d.behavioral_mistake.text == fa::mistake::repeated_action);

  Trace o;
  o.model(1);
  o.outcome(2, {"lint"});
  b = bundle_of(o.spans);
  d = fa::fallback_diagnose(records_of(b), b, {});
  CHECK(d.primary_cause.text == "required check 'lint' never passed");
  CHECK(d.behavioral_mistake.text == fa::mistake::unverified_stop);
}

TEST_CASE("claim-vs-evaluator conflict drives the mistake") {
  Trace t;
  t.add(1, fa::EventType::model_response, fa::SpanStatus::ok, "Done, the fix verified locally.");
  t.add(2, fa::EventType::submission, fa::SpanStatus::ok, "", {{"tool", "submit"}});
  t.outcome(3, {"unit"});
  const auto b = bundle_of(t.spans);
  const auto d = fa::fallback_diagnose(records_of(b), b, {});
  CHECK(d.behavioral_mistake.text == fa::mistake::claimed_success);
}

TEST_CASE("golden targetPort case") {
  const auto b = bundle_of(golden());
  CHECK(b.logs.size() == 1);
  std::size_t mismatches = 0;
  for (const auto& st : b.env) mismatches += st.mismatches().size();
  CHECK(mismatches == 1);
  REQUIRE(b.outcome.has_value());
  CHECK(b.outcome->front().verdict == fa::Verdict::unresolved);
  CHECK(fa::premature_submission(b));

  const auto records = records_of(b);
  const auto d = fa::fallback_diagnose(records, b, {});
  CHECK(d.failure_anchor.anchor.key == "connect to <id>:<num> failed: connection refused");
  CHECK(d.failure_anchor.anchor.category == fa::AnchorCategory::error_signature);
  CHECK(d.behavioral_mistake.text == fa::mistake::premature_submission);
  CHECK(d.primary_cause.text.find("targetPort") != std::string::npos);
  for (const auto& id : d.failure_anchor.record_ids) CHECK(fa::find_record(records, id) != nullptr);
}

TEST_CASE("premature submission needs a submission and no earlier passing check") {
  Trace none;
  none.model(1);
  CHECK_FALSE(fa::premature_submission(bundle_of(none.spans)));

  Trace verified;
  verified.add(1, fa::EventType::verifier_result, fa::SpanStatus::ok, "pass", {{"check", "c"}});
  verified.add(2, fa::EventType::submission);
  CHECK_FALSE(fa::premature_submission(bundle_of(verified.spans)));

  Trace failed_check;
  failed_check.add(1, fa::EventType::verifier_result, fa::SpanStatus::error, "fail", {{"check", "c"}});
  failed_check.add(2, fa::EventType::submission);
  CHECK(fa::premature_submission(bundle_of(failed_check.spans)));
}

TEST_CASE("no records: minimal diagnosis with an outcome, error without") {
  Trace t;
  t.model(1);
  t.outcome(2, {});
  const auto b = bundle_of(t.spans);
  const auto d = fa::fallback_diagnose({}, b, {});
  CHECK(d.failure_anchor.anchor.key == fa::kRunUnresolvedKey);
  CHECK(d.failure_anchor.record_ids.empty());

  Trace u;
  u.model(1);
  try {
    fa::fallback_diagnose({}, bundle_of(u.spans), {});
    FAIL("no evidence accepted");
  } catch (const fa::Error& e) {
    CHECK(e.code() == fa::ErrorCode::no_evidence);
  }
}

TEST_CASE("fallback is pure") {
  const auto b = bundle_of(golden());
  const auto r = records_of(b);
  CHECK(fa::fallback_diagnose(r, b, {}) == fa::fallback_diagnose(r, b, {}));
}

TEST_CASE("validate_diagnosis") {
  const auto b = bundle_of(golden());
  const auto records = records_of(b);
  const std::string id = records.front().record_id;
  fa::DiagnoseConfig cfg;

  auto raw = raw_for(id);
  raw["confidence"] = 1.5;
  CHECK(fa::validate_diagnosis(raw, records, cfg).confidence == 1.0);
  raw["confidence"] = -2;
  CHECK(fa::validate_diagnosis(raw, records, cfg).confidence == 0.0);

  raw = raw_for(id);
  for (int i = 0; i < 8; ++i) raw["contributing_factors"].push_back({{"text", "f" + std::to_string(i)}, {"record_id", id}});
  const auto d = fa::validate_diagnosis(raw, records, cfg);
  REQUIRE(d.contributing_factors.size() == 5);
  CHECK(d.contributing_factors.front().text == "f0");
  CHECK(d.contributing_factors.back().text == "f4");
  CHECK(d.origin == fa::DiagnosisOrigin::backend);

  raw = raw_for(id);
  raw["primary_cause"]["record_ids"] = {id, "rec-ffffffffffff"};
  CHECK(fa::validate_diagnosis(raw, records, cfg).primary_cause.record_ids == std::vector<std::string>{id});

  raw = raw_for("rec-ffffffffffff");
  try {
    fa::validate_diagnosis(raw, records, cfg);
    FAIL("dangling anchor accepted");
  } catch (const fa::Error& e) {
    CHECK(e.code() == fa::ErrorCode::unsupported_anchor);
  }

  raw = raw_for(id);
  raw.erase("failure_anchor");
  try {
    fa::validate_diagnosis(raw, records, cfg);
    FAIL("missing field accepted");
  } catch (const fa::Error& e) {
    CHECK(e.code() == fa::ErrorCode::schema_violation);
  }

  raw = raw_for(id);
  raw["evidence_summary"] = std::string(5000, 'x');
  CHECK(fa::validate_diagnosis(raw, records, cfg).evidence_summary.size() <= cfg.summary_max_chars);
}

TEST_CASE("build_context keeps the top-k records in order") {
  std::vector<fa::EvidenceUnit> units;
  for (int i = 0; i < 20; ++i) {
    units.push_back(scenarios::unit(fa::FindingKind::outcome_mismatch, "check-" + std::to_string(i),
                                    fa::AnchorCategory::check, "", {i, i}, fa::Severity::high,
                                    {"s" + std::to_string(i)}, fa::SourceFamily::outcome));
  }
  const auto records = fa::fuse(units);
  const auto b = bundle_of(golden());
  const auto ctx = fa::build_context(records, b, {});
  REQUIRE(ctx.records.size() == 12);
  for (std::size_t i = 0; i < 12; ++i) CHECK(ctx.records[i].record_id == records[i].record_id);
  CHECK(ctx.task.find("registration") != std::string::npos);
  CHECK(fa::build_context({}, b, {}).records.empty());
  CHECK(fa::context_to_json(ctx) == fa::context_to_json(fa::build_context(records, b, {})));
}

TEST_CASE("diagnose_run uses the backend once and falls back on bad output") {
  const auto b = bundle_of(golden());
  const auto records = records_of(b);

  StubBackend good(raw_for(records.front().record_id));
  auto out = fa::diagnose_run(records, b, {}, &good);
  CHECK(good.calls == 1);
  CHECK(out.diagnosis.origin == fa::DiagnosisOrigin::backend);
  CHECK_FALSE(out.backend_error.has_value());

  StubBackend bad(json{{"nonsense", true}});
  out = fa::diagnose_run(records, b, {}, &bad);
  CHECK(bad.calls == 1);
  CHECK(out.diagnosis.origin == fa::DiagnosisOrigin::fallback);
  REQUIRE(out.backend_error.has_value());
  CHECK(out.backend_error->find("schema") != std::string::npos);

  out = fa::diagnose_run(records, b, {}, nullptr);
  CHECK(out.diagnosis.origin == fa::DiagnosisOrigin::fallback);
}

TEST_CASE("command backend round trip through a shell command") {
  namespace fs = std::filesystem;
  const auto b = bundle_of(golden());
  const auto records = records_of(b);
  const fs::path dir = fs::temp_directory_path() / "failanchor-backend-test";
  fs::create_directories(dir);
  const fs::path canned = dir / "canned.json";
  std::ofstream(canned) << raw_for(records.front().record_id).dump();

  fa::CommandBackend ok("test -s {context} && cp '" + canned.string() + "' {output}", 10);
  auto out = fa::diagnose_run(records, b, {}, &ok);
  CHECK(out.diagnosis.origin == fa::DiagnosisOrigin::backend);

  fa::CommandBackend fails("exit 3", 10);
  out = fa::diagnose_run(records, b, {}, &fails);
  CHECK(out.diagnosis.origin == fa::DiagnosisOrigin::fallback);
  CHECK(out.backend_error.has_value());

  fa::CommandBackend slow("sleep 5", 1);
  out = fa::diagnose_run(records, b, {}, &slow);
  CHECK(out.diagnosis.origin == fa::DiagnosisOrigin::fallback);
  CHECK(out.backend_error.has_value());
  fs::remove_all(dir);
}
