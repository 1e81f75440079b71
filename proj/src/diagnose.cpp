#include "failanchor/diagnose.hpp"

#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "failanchor/error.hpp"
#include "failanchor/report.hpp"

namespace failanchor {

using nlohmann::json;

namespace {

[[noreturn]] void schema(const std::string& msg) { throw Error(ErrorCode::schema_violation, msg); }

const json& field(const json& obj, const char* key, const char* where) {
  auto it = obj.find(key);
  if (it == obj.end()) schema(std::string(where) + " is missing '" + key + "'");
  return *it;
}

std::string string_field(const json& obj, const char* key, const char* where) {
  const json& v = field(obj, key, where);
  if (!v.is_string()) schema(std::string(where) + "." + key + " must be a string");
  return v.get<std::string>();
}

const json& object_field(const json& obj, const char* key) {
  const json& v = field(obj, key, "diagnosis");
  if (!v.is_object()) schema(std::string(key) + " must be an object");
  return v;
}

// Citations that resolve, in their original order, without duplicates.
std::vector<std::string> resolving_ids(const json& obj, const char* where,
                                       const std::vector<FusedEvidenceRecord>& records) {
  const json& ids = field(obj, "record_ids", where);
  if (!ids.is_array()) schema(std::string(where) + ".record_ids must be an array");
  std::vector<std::string> out;
  for (const auto& id : ids) {
    if (!id.is_string()) schema(std::string(where) + ".record_ids must hold strings");
    const auto& s = id.get_ref<const std::string&>();
    if (find_record(records, s) != nullptr && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  }
  return out;
}

std::string clip_utf8(std::string text, std::size_t max_bytes) {
  if (text.size() <= max_bytes) return text;
  std::size_t keep = max_bytes;
  while (keep > 0 && (static_cast<unsigned char>(text[keep]) & 0xC0) == 0x80) --keep;
  text.resize(keep);
  return text;
}

const EvidenceUnit* first_with_infra(const FusedEvidenceRecord& r) {
  for (const auto& u : r.support) {
    if (u.detail.infra_class != InfraClass::none) return &u;
  }
  return nullptr;
}

bool agent_side(const EvidenceUnit& u) {
  if (u.detail.infra_class != InfraClass::none) return false;
  switch (u.origin_kind) {
    case FindingKind::execution_error:
    case FindingKind::repeated_failure:
    case FindingKind::state_mismatch:
    case FindingKind::outcome_mismatch:
      return true;
    default:
      return false;
  }
}

bool infra_dominated(const FusedEvidenceRecord& r) {
  return first_with_infra(r) != nullptr && std::none_of(r.support.begin(), r.support.end(), agent_side);
}

std::string cause_text(const FusedEvidenceRecord& r) {
  const EvidenceUnit& lead = r.lead();
  const auto& d = lead.detail;
  switch (lead.origin_kind) {
    case FindingKind::execution_error: {
      const std::string tool = lead.anchor.tool.empty() ? "unknown" : lead.anchor.tool;
      if (d.infra_class != InfraClass::none) {
        return "tool '" + tool + "' repeatedly failed with " + std::string(to_string(d.infra_class)) + " errors";
      }
      return "tool '" + tool + "' repeatedly failed (" + d.signature + ")";
    }
    case FindingKind::outcome_mismatch:
      if (lead.anchor.key == kRunUnresolvedKey) return "run ended unresolved with no passing check";
      return "required check '" + (d.check.empty() ? lead.anchor.key : d.check) + "' never passed";
    case FindingKind::repeated_failure:
      return "action '" + lead.anchor.key + "' retried without progress";
    case FindingKind::intent_surprise:
      return "erratic strategy shift near step " + std::to_string(lead.time_scope.end);
    case FindingKind::aggregate_metric_anomaly:
      return "resource use without commensurate progress";
    case FindingKind::infrastructure_clue:
      return "environment-level condition: " + std::string(to_string(d.infra_class));
    case FindingKind::metric_anomaly:
      return "metric '" + lead.anchor.key + "' departed sharply from the run baseline";
    case FindingKind::state_mismatch:
      return "workflow state '" + d.state_key + "' diverged from expectation (expected " + d.expected +
             ", observed " + d.actual + ")";
    case FindingKind::pattern_summary:
      return "run ended without a localized failure signal";
  }
  return "unclassified failure";
}

const FusedEvidenceRecord* record_citing(const std::vector<FusedEvidenceRecord>& records, const std::string& span_id) {
  for (const auto& r : records) {
    for (const auto& u : r.support) {
      if (std::find(u.evidence_ref.begin(), u.evidence_ref.end(), span_id) != u.evidence_ref.end()) return &r;
    }
  }
  return nullptr;
}

std::string first_submission_id(const TelemetryBundle& bundle) {
  for (const auto& s : bundle.traces) {
    if (s.event == EventType::submission) return s.span_id;
  }
  return {};
}

std::string summary_of(const std::vector<FusedEvidenceRecord>& records, std::size_t max_chars) {
  std::string out;
  for (const auto& r : records) {
    std::string line = r.record_id + ": " + std::string(to_string(r.anchor_kind)) + " '" + r.anchor.key + "' [" +
                       std::string(to_string(r.severity)) + "; ";
    bool first = true;
    for (auto s : r.sources) {
      if (!first) line += ",";
      line += to_string(s);
      first = false;
    }
    line += "; steps " + std::to_string(r.time_scope.start) + "-" + std::to_string(r.time_scope.end) + "]";
    const std::string sep = out.empty() ? "" : "\n";
    if (out.size() + sep.size() + line.size() > max_chars) break;
    out += sep + line;
  }
  return out;
}

std::string replace_all(std::string s, std::string_view from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

std::string shell_quote(const std::string& s) { return "'" + replace_all(s, "'", "'\\''") + "'"; }

}  // namespace

std::string_view to_string(DiagnosisOrigin o) noexcept {
  return o == DiagnosisOrigin::backend ? "backend" : "fallback";
}

bool premature_submission(const TelemetryBundle& bundle) {
  for (const auto& s : bundle.traces) {
    if (s.event == EventType::verifier_result && s.status == SpanStatus::ok) return false;
    if (s.event == EventType::submission) return true;
  }
  return false;
}

RunDigest digest_run(const TelemetryBundle& bundle) {
  RunDigest d;
  d.step_count = static_cast<std::int64_t>(bundle.intent.size());
  d.span_count = bundle.traces.size();
  for (const auto& a : bundle.intent) ++d.intent_histogram[std::string(to_string(a.label))];
  d.final_outcome = bundle.outcome && !bundle.outcome->empty()
                        ? std::string(to_string(bundle.outcome->back().verdict))
                        : std::string("none");
  d.submitted = !first_submission_id(bundle).empty();
  d.verified_before_submission = d.submitted && !premature_submission(bundle);
  return d;
}

DiagnosisContext build_context(const std::vector<FusedEvidenceRecord>& records, const TelemetryBundle& bundle,
                               const DiagnoseConfig& cfg) {
  DiagnosisContext ctx;
  const std::size_t k = std::min(cfg.top_k, records.size());
  ctx.records.assign(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(k));
  ctx.digest = digest_run(bundle);
  for (const auto& s : bundle.traces) {
    if (s.event == EventType::system_message && s.meta_string(meta_key::role) == "header") {
      ctx.task = clip_utf8(s.payload, cfg.summary_max_chars);
      break;
    }
  }
  return ctx;
}

StructuredDiagnosis validate_diagnosis(const json& raw, const std::vector<FusedEvidenceRecord>& records,
                                       const DiagnoseConfig& cfg) {
  if (!raw.is_object()) schema("diagnosis must be an object");

  StructuredDiagnosis d;
  d.origin = DiagnosisOrigin::backend;

  const json& cause = object_field(raw, "primary_cause");
  d.primary_cause.text = string_field(cause, "text", "primary_cause");
  d.primary_cause.record_ids = resolving_ids(cause, "primary_cause", records);

  const json& anchor = object_field(raw, "failure_anchor");
  const std::string category_name = string_field(anchor, "category", "failure_anchor");
  const auto category = parse_anchor_category(category_name);
  if (!category) schema("failure_anchor.category '" + category_name + "' is not a known category");
  std::string tool;
  if (anchor.contains("tool")) tool = string_field(anchor, "tool", "failure_anchor");
  d.failure_anchor.anchor = make_anchor(string_field(anchor, "key", "failure_anchor"), *category, tool);
  d.failure_anchor.record_ids = resolving_ids(anchor, "failure_anchor", records);

  const json& mistake_obj = object_field(raw, "behavioral_mistake");
  d.behavioral_mistake.text = string_field(mistake_obj, "text", "behavioral_mistake");
  d.behavioral_mistake.record_ids = resolving_ids(mistake_obj, "behavioral_mistake", records);

  const json& factors = field(raw, "contributing_factors", "diagnosis");
  if (!factors.is_array()) schema("contributing_factors must be an array");
  for (const auto& f : factors) {
    if (!f.is_object()) schema("contributing_factors entries must be objects");
    Factor factor{string_field(f, "text", "contributing_factors[]"), string_field(f, "record_id", "contributing_factors[]")};
    if (find_record(records, factor.record_id) != nullptr) d.contributing_factors.push_back(std::move(factor));
  }
  if (d.contributing_factors.size() > cfg.max_factors) d.contributing_factors.resize(cfg.max_factors);

  d.evidence_summary = clip_utf8(string_field(raw, "evidence_summary", "diagnosis"), cfg.summary_max_chars);

  const json& conf = field(raw, "confidence", "diagnosis");
  if (!conf.is_number()) schema("confidence must be a number");
  const double c = conf.get<double>();
  d.confidence = std::isfinite(c) ? std::clamp(c, 0.0, 1.0) : 0.0;

  if (d.failure_anchor.record_ids.empty()) {
    throw Error(ErrorCode::unsupported_anchor, "failure_anchor cites no record that exists");
  }
  return d;
}

StructuredDiagnosis fallback_diagnose(const std::vector<FusedEvidenceRecord>& records, const TelemetryBundle& bundle,
                                      const DiagnoseConfig& cfg) {
  StructuredDiagnosis d;
  d.origin = DiagnosisOrigin::fallback;
  d.confidence = cfg.fallback_confidence;

  if (records.empty()) {
    if (!bundle.outcome) throw Error(ErrorCode::no_evidence, "no fused evidence and no outcome family");
    d.primary_cause.text = "run ended " + std::string(to_string(bundle.outcome->back().verdict)) +
                           " with no localized evidence";
    d.failure_anchor.anchor = make_anchor(kRunUnresolvedKey, AnchorCategory::run);
    d.behavioral_mistake.text =
        std::string(premature_submission(bundle) ? mistake::premature_submission : mistake::unverified_stop);
    d.evidence_summary = "no fused evidence records";
    return d;
  }

  const FusedEvidenceRecord& top = records.front();
  const FusedEvidenceRecord* cause = &top;
  // An environment-level anchor does not explain what the agent got wrong;
  // prefer an observed state divergence as the cause when there is one.
  if (infra_dominated(top)) {
    for (const auto& r : records) {
      if (r.anchor_kind == FindingKind::state_mismatch) {
        cause = &r;
        break;
      }
    }
  }

  d.failure_anchor = {top.anchor, {top.record_id}};
  d.primary_cause.text = cause_text(*cause);
  d.primary_cause.record_ids = {cause->record_id};
  if (cause != &top) d.primary_cause.record_ids.push_back(top.record_id);

  const FusedEvidenceRecord* cite = nullptr;
  if (auto it = std::find_if(records.begin(), records.end(), [](const auto& r) { return !r.conflicts.empty(); });
      it != records.end()) {
    d.behavioral_mistake.text = std::string(mistake::claimed_success);
    cite = &*it;
  } else if (auto rf = std::find_if(records.begin(), records.end(),
                                    [](const auto& r) { return r.has_kind(FindingKind::repeated_failure); });
             rf != records.end()) {
    d.behavioral_mistake.text = std::string(mistake::repeated_action);
    cite = &*rf;
  } else if (premature_submission(bundle)) {
    d.behavioral_mistake.text = std::string(mistake::premature_submission);
    cite = record_citing(records, first_submission_id(bundle));
  } else {
    d.behavioral_mistake.text = std::string(mistake::unverified_stop);
    if (bundle.outcome) cite = record_citing(records, bundle.outcome->back().span_id);
  }
  d.behavioral_mistake.record_ids = {cite != nullptr ? cite->record_id : top.record_id};

  for (const auto& r : records) {
    if (d.contributing_factors.size() >= cfg.max_factors) break;
    if (&r == &top || &r == cause) continue;
    d.contributing_factors.push_back({cause_text(r), r.record_id});
  }
  d.evidence_summary = summary_of(records, cfg.summary_max_chars);
  return d;
}

CommandBackend::CommandBackend(std::string command, int timeout_s)
    : command_(std::move(command)), timeout_s_(std::max(1, timeout_s)) {}

json CommandBackend::diagnose(const DiagnosisContext& context) {
  namespace fs = std::filesystem;
  static std::atomic<unsigned> counter{0};
  const std::string stem = "failanchor-" + std::to_string(::getpid()) + "-" + std::to_string(counter++);
  const fs::path dir = fs::temp_directory_path();
  const fs::path ctx_path = dir / (stem + "-context.json");
  const fs::path out_path = dir / (stem + "-diagnosis.json");

  struct Cleanup {
    fs::path a, b;
    ~Cleanup() {
      std::error_code ec;
      fs::remove(a, ec);
      fs::remove(b, ec);
    }
  } cleanup{ctx_path, out_path};

  {
    std::ofstream out(ctx_path);
    if (!out) throw Error(ErrorCode::backend_failure, "cannot write context file " + ctx_path.string());
    out << context_to_json(context).dump(2) << "\n";
  }

  std::string cmd = replace_all(command_, "{context}", shell_quote(ctx_path.string()));
  cmd = replace_all(cmd, "{output}", shell_quote(out_path.string()));

  const pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorCode::backend_failure, "fork failed");
  if (pid == 0) {
    ::setpgid(0, 0);
    ::execl("/bin/sh", "sh", "-c", cmd.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }

  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(timeout_s_);
  int status = 0;
  for (;;) {
    const pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0) throw Error(ErrorCode::backend_failure, "waitpid failed");
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(-pid, SIGKILL);
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      throw Error(ErrorCode::backend_failure,
                  "backend command timed out after " + std::to_string(timeout_s_) + " s");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw Error(ErrorCode::backend_failure,
                "backend command exited with status " + std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1));
  }

  std::ifstream in(out_path);
  if (!in) throw Error(ErrorCode::backend_failure, "backend wrote no output file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::backend_failure, std::string("backend output is not JSON: ") + e.what());
  }
}

DiagnosisOutcome diagnose_run(const std::vector<FusedEvidenceRecord>& records, const TelemetryBundle& bundle,
                              const DiagnoseConfig& cfg, DiagnosisBackend* backend) {
  DiagnosisOutcome outcome;
  if (backend != nullptr) {
    try {
      const json raw = backend->diagnose(build_context(records, bundle, cfg));
      outcome.diagnosis = validate_diagnosis(raw, records, cfg);
      return outcome;
    } catch (const std::exception& e) {
      outcome.backend_error = backend->name() + ": " + e.what();
    }
  }
  outcome.diagnosis = fallback_diagnose(records, bundle, cfg);
  return outcome;
}

json context_to_json(const DiagnosisContext& context) {
  json records = json::array();
  for (const auto& r : context.records) records.push_back(to_json(r));
  const auto& dg = context.digest;
  return json{
      {"task", context.task},
      {"digest",
       {{"step_count", dg.step_count},
        {"span_count", dg.span_count},
        {"intent_histogram", dg.intent_histogram},
        {"final_outcome", dg.final_outcome},
        {"submitted", dg.submitted},
        {"verified_before_submission", dg.verified_before_submission}}},
      {"records", std::move(records)},
  };
}

json diagnosis_to_json(const StructuredDiagnosis& d) {
  json factors = json::array();
  for (const auto& f : d.contributing_factors) factors.push_back({{"text", f.text}, {"record_id", f.record_id}});
  return json{
      {"primary_cause", {{"text", d.primary_cause.text}, {"record_ids", d.primary_cause.record_ids}}},
      {"failure_anchor",
       {{"key", d.failure_anchor.anchor.key},
        {"category", to_string(d.failure_anchor.anchor.category)},
        {"tool", d.failure_anchor.anchor.tool},
        {"record_ids", d.failure_anchor.record_ids}}},
      {"behavioral_mistake", {{"text", d.behavioral_mistake.text}, {"record_ids", d.behavioral_mistake.record_ids}}},
      {"contributing_factors", std::move(factors)},
      {"evidence_summary", d.evidence_summary},
      {"confidence", d.confidence},
      {"origin", to_string(d.origin)},
  };
}

}  // namespace failanchor
