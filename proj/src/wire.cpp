#include "failanchor/wire.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "failanchor/error.hpp"
#include "failanchor/signature.hpp"

namespace failanchor {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 10> kEventNames = {
    "model_response",    "tool_call",  "tool_return",    "verifier_result", "metric_snapshot",
    "runtime_exception", "submission", "system_message", "env_observation", "outcome_verdict"};
constexpr std::array<std::string_view, 4> kStatusNames = {"ok", "error", "timeout", "unknown"};
constexpr std::array<std::string_view, 5> kIntentNames = {
    "gather_evidence", "edit_artifact", "run_verification", "prepare_submission", "other"};

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::string_view, N>& names, std::string_view s) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  return std::nullopt;
}

[[noreturn]] void malformed(const std::string& msg) { throw Error(ErrorCode::malformed_record, msg); }

std::int64_t require_int(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) malformed(std::string("missing required field '") + key + "'");
  if (it->is_number_unsigned()) {
    auto v = it->get<std::uint64_t>();
    if (v > static_cast<std::uint64_t>(INT64_MAX)) malformed(std::string("field '") + key + "' out of range");
    return static_cast<std::int64_t>(v);
  }
  if (!it->is_number_integer()) malformed(std::string("field '") + key + "' must be an integer");
  return it->get<std::int64_t>();
}

std::string require_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) malformed(std::string("missing required field '") + key + "'");
  if (!it->is_string()) malformed(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

bool lower_equals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  }
  return true;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

}  // namespace

std::string_view to_string(EventType e) noexcept { return kEventNames[static_cast<std::size_t>(e)]; }
std::string_view to_string(SpanStatus s) noexcept { return kStatusNames[static_cast<std::size_t>(s)]; }
std::optional<EventType> parse_event_type(std::string_view s) noexcept {
  return lookup<EventType>(kEventNames, s);
}
std::optional<SpanStatus> parse_span_status(std::string_view s) noexcept {
  return lookup<SpanStatus>(kStatusNames, s);
}
std::string_view to_string(IntentLabel l) noexcept { return kIntentNames[static_cast<std::size_t>(l)]; }
std::optional<IntentLabel> parse_intent_label(std::string_view s) noexcept {
  return lookup<IntentLabel>(kIntentNames, s);
}

std::string_view to_string(ToolAvailability a) noexcept {
  switch (a) {
    case ToolAvailability::available: return "available";
    case ToolAvailability::failed: return "failed";
    case ToolAvailability::unknown: return "unknown";
  }
  return "unknown";
}

std::string_view to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::resolved: return "resolved";
    case Verdict::unresolved: return "unresolved";
    case Verdict::unknown: return "unknown";
  }
  return "unknown";
}

std::string Span::meta_string(std::string_view key) const {
  if (!meta.is_object()) return {};
  auto it = meta.find(key);
  if (it == meta.end()) return {};
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  if (it->is_number_unsigned()) return std::to_string(it->get<std::uint64_t>());
  if (it->is_number_float() || it->is_boolean()) return it->dump();
  return {};
}

std::optional<double> Span::meta_number(std::string_view key) const {
  if (!meta.is_object()) return std::nullopt;
  auto it = meta.find(key);
  if (it == meta.end()) return std::nullopt;
  if (it->is_number()) {
    double v = it->get<double>();
    return std::isfinite(v) ? std::optional<double>(v) : std::nullopt;
  }
  if (it->is_string()) {
    const auto& s = it->get_ref<const std::string&>();
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(v)) return v;
  }
  return std::nullopt;
}

std::string truncate_payload(std::string payload, std::size_t cap) {
  if (payload.size() <= cap) return payload;
  std::size_t keep = cap > kTruncationMarker.size() ? cap - kTruncationMarker.size() : 0;
  while (keep > 0 && (static_cast<unsigned char>(payload[keep]) & 0xC0) == 0x80) --keep;
  payload.resize(keep);
  payload.append(kTruncationMarker);
  return payload;
}

Span parse_span_line(std::string_view line, std::size_t payload_cap) {
  json doc;
  try {
    doc = json::parse(line.begin(), line.end());
  } catch (const json::parse_error& e) {
    malformed(std::string("unparseable record: ") + e.what());
  }
  if (!doc.is_object()) malformed("record is not a JSON object");

  Span span;
  span.span_id = require_string(doc, "span_id");
  if (span.span_id.empty()) malformed("empty span_id");

  if (auto it = doc.find("parent_id"); it != doc.end() && !it->is_null()) {
    if (!it->is_string()) malformed("field 'parent_id' must be a string or null");
    span.parent_id = it->get<std::string>();
  }

  span.step = require_int(doc, "step");
  if (span.step < 0) malformed("negative step " + std::to_string(span.step));
  span.ts_ms = require_int(doc, "ts_ms");

  const std::string event = require_string(doc, "event");
  auto et = parse_event_type(event);
  if (!et) malformed("unknown event type '" + event + "'");
  span.event = *et;

  const std::string status = require_string(doc, "status");
  auto st = parse_span_status(status);
  if (!st) malformed("unknown status '" + status + "'");
  span.status = *st;

  if (auto it = doc.find("payload"); it != doc.end() && !it->is_null()) {
    if (!it->is_string()) malformed("field 'payload' must be a string");
    span.payload = truncate_payload(it->get<std::string>(), payload_cap);
  }
  if (auto it = doc.find("meta"); it != doc.end() && !it->is_null()) {
    if (!it->is_object()) malformed("field 'meta' must be an object");
    span.meta = *it;
  }

  static const std::set<std::string_view> known = {"span_id", "parent_id", "step",    "ts_ms",
                                                   "event",   "status",    "payload", "meta"};
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!known.count(it.key())) span.extra[it.key()] = it.value();
  }
  return span;
}

std::string serialize_span(const Span& span) {
  std::string out;
  out.reserve(128 + span.payload.size());
  out += "{\"span_id\":";
  out += dump(span.span_id);
  out += ",\"parent_id\":";
  out += span.parent_id ? dump(*span.parent_id) : std::string("null");
  out += ",\"step\":";
  out += std::to_string(span.step);
  out += ",\"ts_ms\":";
  out += std::to_string(span.ts_ms);
  out += ",\"event\":\"";
  out += to_string(span.event);
  out += "\",\"status\":\"";
  out += to_string(span.status);
  out += "\",\"payload\":";
  out += dump(span.payload);
  out += ",\"meta\":";
  out += span.meta.is_object() ? dump(span.meta) : std::string("{}");
  if (span.extra.is_object()) {
    for (auto it = span.extra.begin(); it != span.extra.end(); ++it) {
      out += ',';
      out += dump(it.key());
      out += ':';
      out += dump(it.value());
    }
  }
  out += '}';
  return out;
}

TraceReadResult read_trace(std::istream& in, const WireConfig& cfg) {
  TraceReadResult result;
  std::set<std::string, std::less<>> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    Span span;
    try {
      span = parse_span_line(line, cfg.payload_cap_bytes);
    } catch (const Error& e) {
      if (!cfg.skip_malformed) {
        throw Error(ErrorCode::malformed_record, "line " + std::to_string(lineno) + ": " + e.what());
      }
      ++result.malformed_lines;
      result.malformed_messages.push_back("line " + std::to_string(lineno) + ": " + e.what());
      continue;
    }
    if (!ids.insert(span.span_id).second) {
      throw Error(ErrorCode::duplicate_span_id,
                  "line " + std::to_string(lineno) + ": span_id '" + span.span_id + "' repeated");
    }
    result.spans.push_back(std::move(span));
  }
  return result;
}

TraceReadResult read_trace_file(const std::string& path, const WireConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::malformed_record, "cannot open trace file '" + path + "'");
  return read_trace(in, cfg);
}

void write_trace(std::ostream& out, const std::vector<Span>& spans) {
  for (const auto& s : spans) out << serialize_span(s) << '\n';
}

std::vector<std::string> check_trace(const std::vector<Span>& spans) {
  std::vector<std::string> issues;
  std::unordered_map<std::string, std::int64_t> step_of;
  std::unordered_map<std::string, std::int64_t> first_call_step;  // tool -> earliest call step
  std::set<std::string> seen;
  std::int64_t prev_step = -1;
  for (const auto& s : spans) {
    if (!seen.insert(s.span_id).second) issues.push_back("duplicate span_id '" + s.span_id + "'");
    if (s.step < prev_step) {
      issues.push_back("span '" + s.span_id + "' step " + std::to_string(s.step) +
                       " decreases from " + std::to_string(prev_step));
    }
    prev_step = std::max(prev_step, s.step);
    if (s.parent_id) {
      auto it = step_of.find(*s.parent_id);
      if (it == step_of.end()) {
        issues.push_back("span '" + s.span_id + "' names unknown parent '" + *s.parent_id + "'");
      } else if (it->second >= s.step) {
        issues.push_back("span '" + s.span_id + "' parent '" + *s.parent_id + "' is not at an earlier step");
      }
    }
    if (s.event == EventType::tool_call) first_call_step.try_emplace(s.tool(), s.step);
    if (s.event == EventType::tool_return) {
      const std::string tool = s.tool();
      if (tool.empty()) {
        issues.push_back("tool_return '" + s.span_id + "' has no tool name");
      } else if (!first_call_step.count(tool)) {
        issues.push_back("tool_return '" + s.span_id + "' answers no prior call of '" + tool + "'");
      }
    }
    step_of.emplace(s.span_id, s.step);
  }
  return issues;
}

std::vector<StateMismatch> ToolEnvState::mismatches() const {
  static constexpr std::string_view kExpected = ".expected";
  static constexpr std::string_view kActual = ".actual";
  std::vector<StateMismatch> out;
  for (const auto& [key, value] : workflow_state) {
    if (key.size() <= kExpected.size() || key.compare(key.size() - kExpected.size(), kExpected.size(), kExpected) != 0)
      continue;
    std::string base = key.substr(0, key.size() - kExpected.size());
    auto actual = workflow_state.find(base + std::string(kActual));
    if (actual != workflow_state.end() && actual->second != value) {
      out.push_back({base, value, actual->second});
    }
  }
  return out;
}

void TelemetryBundle::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < traces.size(); ++i) index_.emplace(traces[i].span_id, i);
}

std::ptrdiff_t TelemetryBundle::span_index(std::string_view id) const noexcept {
  if (index_.size() == traces.size()) {
    auto it = index_.find(id);
    if (it != index_.end() && it->second < traces.size() && traces[it->second].span_id == id)
      return static_cast<std::ptrdiff_t>(it->second);
  }
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (traces[i].span_id == id) return static_cast<std::ptrdiff_t>(i);
  }
  return -1;
}

const Span* TelemetryBundle::find_span(std::string_view id) const noexcept {
  auto i = span_index(id);
  return i < 0 ? nullptr : &traces[static_cast<std::size_t>(i)];
}

const IntentAnnotation* TelemetryBundle::intent_at(std::int64_t step) const noexcept {
  auto it = std::lower_bound(intent.begin(), intent.end(), step,
                             [](const IntentAnnotation& a, std::int64_t s) { return a.step < s; });
  return it != intent.end() && it->step == step ? &*it : nullptr;
}

bool is_error_bearing(const Span& span) noexcept {
  switch (span.event) {
    case EventType::runtime_exception:
      return true;
    case EventType::tool_return:
    case EventType::system_message:
    case EventType::submission:
      return span.is_failure();
    default:
      return false;
  }
}

IntentAnnotation infer_intent(const std::vector<const Span*>& step_spans,
                              const std::vector<std::string>& edit_tools) {
  IntentAnnotation a;
  a.source = IntentSource::inferred;
  if (!step_spans.empty()) a.step = step_spans.front()->step;
  bool submission = false, verifier = false, edit = false, call = false;
  for (const Span* s : step_spans) {
    a.span_ids.push_back(s->span_id);
    switch (s->event) {
      case EventType::submission: submission = true; break;
      case EventType::verifier_result: verifier = true; break;
      case EventType::tool_call: {
        call = true;
        const std::string tool = s->tool();
        for (const auto& t : edit_tools) {
          if (lower_equals(t, tool)) edit = true;
        }
        break;
      }
      default: break;
    }
  }
  if (submission) a.label = IntentLabel::prepare_submission;
  else if (verifier) a.label = IntentLabel::run_verification;
  else if (edit) a.label = IntentLabel::edit_artifact;
  else if (call) a.label = IntentLabel::gather_evidence;
  else a.label = IntentLabel::other;
  return a;
}

namespace {

std::vector<std::string> failing_checks_of(const Span& s) {
  std::vector<std::string> out;
  auto it = s.meta.find(std::string(meta_key::failing_checks));
  if (it == s.meta.end()) return out;
  if (it->is_array()) {
    for (const auto& v : *it) {
      if (v.is_string() && !is_blank(v.get_ref<const std::string&>())) out.push_back(v.get<std::string>());
    }
  } else if (it->is_string()) {
    std::stringstream ss(it->get<std::string>());
    std::string item;
    while (std::getline(ss, item, ',')) {
      std::string t = collapse_whitespace(item);
      if (!t.empty()) out.push_back(t);
    }
  }
  return out;
}

Verdict verdict_of(const Span& s) {
  std::string v = normalize_key(s.meta_string(meta_key::verdict));
  if (v == "resolved" || v == "pass" || v == "passed" || v == "success") return Verdict::resolved;
  if (v == "unresolved" || v == "fail" || v == "failed" || v == "failure") return Verdict::unresolved;
  return Verdict::unknown;
}

ToolAvailability availability_of(SpanStatus s) {
  switch (s) {
    case SpanStatus::ok: return ToolAvailability::available;
    case SpanStatus::error:
    case SpanStatus::timeout: return ToolAvailability::failed;
    case SpanStatus::unknown: return ToolAvailability::unknown;
  }
  return ToolAvailability::unknown;
}

}  // namespace

TelemetryBundle build_bundle(std::vector<Span> spans, bool strict, const WireConfig& cfg) {
  if (spans.empty()) throw Error(ErrorCode::empty_input, "trace has no spans");
  auto key_less = [](const Span& a, const Span& b) {
    return a.step != b.step ? a.step < b.step : a.ts_ms < b.ts_ms;
  };
  if (strict) {
    auto it = std::is_sorted_until(spans.begin(), spans.end(), key_less);
    if (it != spans.end()) {
      throw Error(ErrorCode::ordering_violation, "span '" + it->span_id + "' is out of (step, ts_ms) order");
    }
  } else {
    std::stable_sort(spans.begin(), spans.end(), key_less);
  }

  TelemetryBundle b;
  b.traces = std::move(spans);
  b.reindex();

  std::vector<OutcomeSignal> outcomes;
  for (const auto& s : b.traces) {
    if (is_error_bearing(s)) {
      std::string text = is_blank(s.payload)
                             ? std::string(to_string(s.event)) + " " + std::string(to_string(s.status))
                             : canonicalize_error(s.payload).canonical;
      b.logs.push_back({s.span_id, s.step, std::move(text)});
    }

    if (s.event == EventType::env_observation || s.event == EventType::tool_return) {
      if (b.env.empty() || b.env.back().step != s.step) {
        ToolEnvState st;
        st.step = s.step;
        b.env.push_back(std::move(st));
      }
      ToolEnvState& st = b.env.back();
      st.span_ids.push_back(s.span_id);
      if (s.event == EventType::tool_return) {
        const std::string tool = s.tool();
        if (!tool.empty()) st.tool_status[tool] = availability_of(s.status);
      } else {
        for (auto it = s.meta.begin(); it != s.meta.end(); ++it) {
          const std::string& k = it.key();
          if (k.size() > meta_key::state_prefix.size() && k.starts_with(meta_key::state_prefix)) {
            st.workflow_state[k.substr(meta_key::state_prefix.size())] = s.meta_string(k);
          }
        }
        if (!is_blank(s.payload)) st.evaluator_signals.push_back(s.payload);
      }
    }

    if (s.event == EventType::outcome_verdict) {
      OutcomeSignal o;
      o.verdict = verdict_of(s);
      o.failing_checks = failing_checks_of(s);
      o.span_id = s.span_id;
      o.step = s.step;
      outcomes.push_back(std::move(o));
    }
  }
  if (!outcomes.empty()) b.outcome = std::move(outcomes);

  // One annotation per step that has spans; an explicit meta.intent label wins.
  std::size_t i = 0;
  while (i < b.traces.size()) {
    std::size_t j = i;
    std::vector<const Span*> step_spans;
    std::optional<IntentLabel> explicit_label;
    while (j < b.traces.size() && b.traces[j].step == b.traces[i].step) {
      const Span& s = b.traces[j];
      step_spans.push_back(&s);
      if (!explicit_label) explicit_label = parse_intent_label(s.meta_string(meta_key::intent));
      ++j;
    }
    IntentAnnotation a = infer_intent(step_spans, cfg.edit_tools);
    if (explicit_label) {
      a.label = *explicit_label;
      a.source = IntentSource::explicit_label;
    }
    b.intent.push_back(std::move(a));
    i = j;
  }
  return b;
}

std::string argument_fingerprint(const Span& call) {
  std::string fp = normalize_key(call.meta_string(meta_key::args_fp));
  if (fp.empty()) fp = normalize_key(call.payload);
  if (fp.empty()) return "<no-args>";
  if (fp.size() > 120) {
    std::size_t keep = 120;
    while (keep > 0 && (static_cast<unsigned char>(fp[keep]) & 0xC0) == 0x80) --keep;
    fp.resize(keep);
  }
  return fp;
}

std::vector<ToolCallRecord> pair_tool_calls(const std::vector<Span>& traces) {
  std::vector<ToolCallRecord> calls;
  std::unordered_map<std::string, std::size_t> by_id;
  std::unordered_map<std::string, std::deque<std::size_t>> pending;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const Span& s = traces[i];
    if (s.event == EventType::tool_call) {
      ToolCallRecord r;
      r.call_index = i;
      r.tool = s.tool();
      r.fingerprint = argument_fingerprint(s);
      r.failed = s.is_failure();
      by_id.emplace(s.span_id, calls.size());
      pending[r.tool].push_back(calls.size());
      calls.push_back(std::move(r));
    } else if (s.event == EventType::tool_return) {
      std::optional<std::size_t> match;
      const std::string call_id = s.meta_string(meta_key::call_id);
      if (!call_id.empty()) {
        auto it = by_id.find(call_id);
        if (it != by_id.end() && !calls[it->second].return_index) match = it->second;
      }
      auto& queue = pending[s.tool()];
      if (!match && !queue.empty()) match = queue.front();
      if (!match) continue;
      queue.erase(std::remove(queue.begin(), queue.end(), *match), queue.end());
      if (calls[*match].tool != s.tool()) {
        auto& other = pending[calls[*match].tool];
        other.erase(std::remove(other.begin(), other.end(), *match), other.end());
      }
      calls[*match].return_index = i;
      calls[*match].failed = s.is_failure();
    }
  }
  return calls;
}

}  // namespace failanchor
