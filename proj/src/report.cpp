#include "failanchor/report.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "failanchor/error.hpp"

namespace failanchor {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::invalid_report, msg); }

template <typename T, typename Parse>
T parse_enum(const json& j, Parse parse, const char* what) {
  const auto v = parse(j.get<std::string>());
  if (!v) invalid(std::string("unknown ") + what + " '" + j.get<std::string>() + "'");
  return *v;
}

json detail_to_json(const FindingDetail& d) {
  return json{{"signature", d.signature},     {"infra_class", to_string(d.infra_class)},
              {"check", d.check},             {"success_claim", d.success_claim},
              {"state_key", d.state_key},     {"expected", d.expected},
              {"actual", d.actual},           {"paths", d.paths},
              {"services", d.services},       {"summary", d.summary}};
}

FindingDetail detail_from_json(const json& j) {
  FindingDetail d;
  d.signature = j.at("signature").get<std::string>();
  d.infra_class = parse_enum<InfraClass>(j.at("infra_class"), parse_infra_class, "infra class");
  d.check = j.at("check").get<std::string>();
  d.success_claim = j.at("success_claim").get<bool>();
  d.state_key = j.at("state_key").get<std::string>();
  d.expected = j.at("expected").get<std::string>();
  d.actual = j.at("actual").get<std::string>();
  d.paths = j.at("paths").get<std::vector<std::string>>();
  d.services = j.at("services").get<std::vector<std::string>>();
  d.summary = j.at("summary").get<std::string>();
  return d;
}

json range_to_json(const StepRange& r) { return json::array({r.start, r.end}); }

StepRange range_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) invalid("step range must be a two-element array");
  return {j.at(0).get<std::int64_t>(), j.at(1).get<std::int64_t>()};
}

json hint_to_json(const HintBlock& h) {
  return json{{"text", h.text}, {"token_estimate", h.token_estimate}, {"cited_record_ids", h.cited_record_ids}};
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

template <typename F>
auto guarded(const char* what, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    invalid(std::string(what) + ": " + e.what());
  }
}

}  // namespace

json to_json(const Anchor& a) {
  return json{{"key", a.key}, {"category", to_string(a.category)}, {"tool", a.tool}};
}

Anchor anchor_from_json(const json& j) {
  return guarded("anchor", [&] {
    Anchor a;
    a.key = j.at("key").get<std::string>();
    a.category = parse_enum<AnchorCategory>(j.at("category"), parse_anchor_category, "anchor category");
    a.tool = j.value("tool", std::string());
    return a;
  });
}

json to_json(const LocalizedFinding& f) {
  return json{{"kind", to_string(f.kind)},
              {"anchor", to_json(f.anchor)},
              {"source_family", to_string(f.source_family)},
              {"step_range", range_to_json(f.step_range)},
              {"severity", to_string(f.severity)},
              {"score", f.score},
              {"evidence_refs", f.evidence_refs},
              {"detail", detail_to_json(f.detail)}};
}

json to_json(const EvidenceUnit& u) {
  return json{{"anchor", to_json(u.anchor)},
              {"source", to_string(u.source)},
              {"time_scope", range_to_json(u.time_scope)},
              {"severity", to_string(u.severity)},
              {"evidence_ref", u.evidence_ref},
              {"origin_kind", to_string(u.origin_kind)},
              {"score", u.score},
              {"detail", detail_to_json(u.detail)}};
}

EvidenceUnit unit_from_json(const json& j) {
  return guarded("evidence unit", [&] {
    EvidenceUnit u;
    u.anchor = anchor_from_json(j.at("anchor"));
    u.source = parse_enum<SourceFamily>(j.at("source"), parse_source_family, "source family");
    u.time_scope = range_from_json(j.at("time_scope"));
    u.severity = parse_enum<Severity>(j.at("severity"), parse_severity, "severity");
    u.evidence_ref = j.at("evidence_ref").get<std::vector<std::string>>();
    u.origin_kind = parse_enum<FindingKind>(j.at("origin_kind"), parse_finding_kind, "finding kind");
    u.score = j.at("score").get<double>();
    u.detail = detail_from_json(j.at("detail"));
    return u;
  });
}

json to_json(const FusedEvidenceRecord& r) {
  json sources = json::array();
  for (auto s : r.sources) sources.push_back(to_string(s));
  json support = json::array();
  for (const auto& u : r.support) support.push_back(to_json(u));
  json conflicts = json::array();
  for (const auto& c : r.conflicts) {
    conflicts.push_back({{"first", to_json(c.first)}, {"second", to_json(c.second)}, {"reason", c.reason}});
  }
  return json{{"record_id", r.record_id},
              {"anchor", to_json(r.anchor)},
              {"anchor_kind", to_string(r.anchor_kind)},
              {"sources", std::move(sources)},
              {"time_scope", range_to_json(r.time_scope)},
              {"severity", to_string(r.severity)},
              {"support", std::move(support)},
              {"conflicts", std::move(conflicts)}};
}

FusedEvidenceRecord record_from_json(const json& j) {
  return guarded("record", [&] {
    FusedEvidenceRecord r;
    r.record_id = j.at("record_id").get<std::string>();
    r.anchor = anchor_from_json(j.at("anchor"));
    r.anchor_kind = parse_enum<FindingKind>(j.at("anchor_kind"), parse_finding_kind, "finding kind");
    for (const auto& s : j.at("sources")) r.sources.insert(parse_enum<SourceFamily>(s, parse_source_family, "source family"));
    r.time_scope = range_from_json(j.at("time_scope"));
    r.severity = parse_enum<Severity>(j.at("severity"), parse_severity, "severity");
    for (const auto& u : j.at("support")) r.support.push_back(unit_from_json(u));
    for (const auto& c : j.at("conflicts")) {
      r.conflicts.push_back({unit_from_json(c.at("first")), unit_from_json(c.at("second")), c.at("reason").get<std::string>()});
    }
    if (r.support.empty()) invalid("record '" + r.record_id + "' has no support");
    return r;
  });
}

json to_json(const RecoveryGuidance& g) {
  return json{{"injectable", g.injectable},
              {"target", g.target},
              {"target_record_id", g.target_record_id},
              {"operation", g.operation},
              {"verification_signal", g.verification_signal},
              {"boundary_condition", g.boundary_condition},
              {"non_injectable_reason",
               g.non_injectable_reason ? json(to_string(*g.non_injectable_reason)) : json(nullptr)},
              {"conservative_hints", g.conservative_hints},
              {"contributing_detail", g.contributing_detail},
              {"citation_ids", g.citation_ids}};
}

RecoveryGuidance guidance_from_json(const json& j) {
  return guarded("guidance", [&] {
    RecoveryGuidance g;
    g.injectable = j.at("injectable").get<bool>();
    g.target = j.at("target").get<std::string>();
    g.target_record_id = j.at("target_record_id").get<std::string>();
    g.operation = j.at("operation").get<std::string>();
    g.verification_signal = j.at("verification_signal").get<std::string>();
    g.boundary_condition = j.at("boundary_condition").get<std::string>();
    const json& reason = j.at("non_injectable_reason");
    if (!reason.is_null()) {
      g.non_injectable_reason = parse_enum<NonInjectableReason>(reason, parse_non_injectable_reason, "reason");
    }
    g.conservative_hints = j.at("conservative_hints").get<std::vector<std::string>>();
    g.contributing_detail = j.at("contributing_detail").get<std::vector<std::string>>();
    g.citation_ids = j.at("citation_ids").get<std::vector<std::string>>();
    if (g.injectable == g.non_injectable_reason.has_value()) {
      invalid("guidance must carry a non_injectable_reason exactly when it is not injectable");
    }
    return g;
  });
}

json to_json(const MetricWindow& w) {
  json values = json::object();
  for (Metric m : kAllMetrics) values[std::string(to_string(m))] = w[m];
  return json{{"start_step", w.start_step}, {"end_step", w.end_step}, {"values", std::move(values)},
              {"span_ids", w.span_ids}};
}

json build_report(const PipelineResult& result, const Config& cfg, const ReportOptions& options) {
  const auto& b = result.bundle;
  std::string run_id;
  for (const auto& s : b.traces) {
    if (s.event == EventType::system_message && s.meta_string(meta_key::role) == "header") {
      run_id = s.meta_string("run_id");
      break;
    }
  }

  json run = {{"trace_path", options.trace_path},
              {"run_id", run_id},
              {"span_count", b.traces.size()},
              {"step_count", b.intent.size()},
              {"malformed_lines", options.malformed_lines},
              {"trace_issues", result.trace_issues},
              {"outcome", b.outcome ? json(to_string(b.outcome->back().verdict)) : json(nullptr)}};
  if (!options.deterministic) run["generated_at"] = utc_timestamp();

  json spans = json::array();
  for (const auto& s : b.traces) {
    spans.push_back({{"span_id", s.span_id}, {"step", s.step}, {"event", to_string(s.event)},
                     {"status", to_string(s.status)}});
  }
  json metrics = json::array();
  for (const auto& w : b.metrics) metrics.push_back(to_json(w));
  json findings = json::array();
  for (const auto& f : result.findings) findings.push_back(to_json(f));
  json records = json::array();
  for (const auto& r : result.records) records.push_back(to_json(r));

  json diagnosis = diagnosis_to_json(result.diagnosis.diagnosis);
  diagnosis["backend_error"] = result.diagnosis.backend_error ? json(*result.diagnosis.backend_error) : json(nullptr);

  const auto& gate = result.gate;
  json gate_json = {
      {"grounding",
       {{"grounded", gate.grounding.grounded},
        {"reason", gate.grounding.reason},
        {"supported_entities", gate.grounding.supported_entities},
        {"stripped_entities", gate.grounding.stripped_entities}}},
      {"actionability",
       {{"status", to_string(gate.action.status)},
        {"reason", gate.action.reason},
        {"missing_fields", gate.action.missing_fields}}},
  };

  return json{{"schema", kReportSchema},
              {"pipeline_version", kPipelineVersion},
              {"run", std::move(run)},
              {"config", config_to_json(cfg)},
              {"spans", std::move(spans)},
              {"metrics", std::move(metrics)},
              {"findings", std::move(findings)},
              {"records", std::move(records)},
              {"diagnosis", std::move(diagnosis)},
              {"gate", std::move(gate_json)},
              {"guidance", to_json(gate.guidance)},
              {"hint", hint_to_json(gate.hint)}};
}

LoadedReport parse_report(const json& doc) {
  if (!doc.is_object()) invalid("report must be an object");
  if (doc.value("schema", std::string()) != kReportSchema) {
    invalid("unsupported report schema '" + doc.value("schema", std::string()) + "'");
  }
  LoadedReport out;
  out.doc = doc;
  guarded("report", [&] {
    for (const auto& r : doc.at("records")) out.records.push_back(record_from_json(r));
    out.guidance = guidance_from_json(doc.at("guidance"));
    return 0;
  });
  return out;
}

LoadedReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) invalid("cannot open report '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    invalid("report '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_report(doc);
}

std::vector<std::string> dangling_references(const json& report) {
  std::set<std::string> span_ids, record_ids;
  for (const auto& s : report.value("spans", json::array())) span_ids.insert(s.value("span_id", std::string()));
  for (const auto& r : report.value("records", json::array())) record_ids.insert(r.value("record_id", std::string()));

  std::vector<std::string> out;
  auto check = [&out](const std::set<std::string>& known, const json& ids, const std::string& where) {
    if (ids.is_string()) {
      if (!ids.get<std::string>().empty() && !known.count(ids.get<std::string>()))
        out.push_back(where + ": " + ids.get<std::string>());
      return;
    }
    if (!ids.is_array()) return;
    for (const auto& id : ids) {
      if (id.is_string() && !known.count(id.get<std::string>())) out.push_back(where + ": " + id.get<std::string>());
    }
  };
  auto check_unit = [&](const json& u, const std::string& where) { check(span_ids, u.value("evidence_ref", json()), where); };

  for (const auto& w : report.value("metrics", json::array())) check(span_ids, w.value("span_ids", json()), "metrics");
  for (const auto& f : report.value("findings", json::array())) check(span_ids, f.value("evidence_refs", json()), "findings");
  for (const auto& r : report.value("records", json::array())) {
    const std::string where = "record " + r.value("record_id", std::string());
    for (const auto& u : r.value("support", json::array())) check_unit(u, where);
    for (const auto& c : r.value("conflicts", json::array())) {
      check_unit(c.value("first", json::object()), where + " conflict");
      check_unit(c.value("second", json::object()), where + " conflict");
    }
  }
  const json d = report.value("diagnosis", json::object());
  for (const char* key : {"primary_cause", "failure_anchor", "behavioral_mistake"}) {
    check(record_ids, d.value(key, json::object()).value("record_ids", json()), std::string("diagnosis.") + key);
  }
  for (const auto& f : d.value("contributing_factors", json::array())) {
    check(record_ids, f.value("record_id", json()), "diagnosis.contributing_factors");
  }
  const json g = report.value("guidance", json::object());
  check(record_ids, g.value("target_record_id", json()), "guidance.target_record_id");
  check(record_ids, g.value("citation_ids", json()), "guidance.citation_ids");
  check(record_ids, report.value("hint", json::object()).value("cited_record_ids", json()), "hint.cited_record_ids");
  return out;
}

std::string summarize_report(const json& report) {
  std::ostringstream os;
  const json run = report.value("run", json::object());
  os << "run " << (run.value("run_id", std::string()).empty() ? "<unnamed>" : run.value("run_id", std::string()))
     << ": " << run.value("span_count", 0) << " spans, " << run.value("step_count", 0) << " steps, outcome "
     << (run.contains("outcome") && run["outcome"].is_string() ? run["outcome"].get<std::string>() : "absent") << "\n";

  const json records = report.value("records", json::array());
  os << "evidence (" << records.size() << " records):\n";
  std::size_t shown = 0;
  for (const auto& r : records) {
    if (shown++ == 5) {
      os << "  ... " << records.size() - 5 << " more\n";
      break;
    }
    const json anchor = r.value("anchor", json::object());
    os << "  [" << r.value("record_id", std::string()) << "] " << r.value("severity", std::string()) << " "
       << r.value("anchor_kind", std::string()) << " '" << anchor.value("key", std::string()) << "' support "
       << r.value("support", json::array()).size();
    const auto conflicts = r.value("conflicts", json::array()).size();
    if (conflicts > 0) os << ", " << conflicts << " conflict(s)";
    os << "\n";
  }

  const json d = report.value("diagnosis", json::object());
  os << "diagnosis (" << d.value("origin", std::string()) << ", confidence " << std::fixed << std::setprecision(2)
     << d.value("confidence", 0.0) << "):\n";
  os << "  cause:   " << d.value("primary_cause", json::object()).value("text", std::string()) << "\n";
  os << "  anchor:  " << d.value("failure_anchor", json::object()).value("key", std::string()) << "\n";
  os << "  mistake: " << d.value("behavioral_mistake", json::object()).value("text", std::string()) << "\n";

  const json g = report.value("guidance", json::object());
  if (g.value("injectable", false)) {
    os << "guidance: injectable\n";
    os << "  target:    " << g.value("target", std::string()) << "\n";
    os << "  operation: " << g.value("operation", std::string()) << "\n";
    os << "  verify:    " << g.value("verification_signal", std::string()) << "\n";
    os << "  boundary:  " << g.value("boundary_condition", std::string()) << "\n";
  } else {
    const json reason = g.value("non_injectable_reason", json());
    os << "guidance: not injectable (" << (reason.is_string() ? reason.get<std::string>() : "unknown") << ")\n";
  }
  const json hint = report.value("hint", json::object());
  os << "hint: " << hint.value("token_estimate", 0) << " tokens\n";
  return os.str();
}

}  // namespace failanchor
