#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "failanchor/config.hpp"
#include "failanchor/metric_window.hpp"

namespace failanchor {

enum class EventType {
  model_response,
  tool_call,
  tool_return,
  verifier_result,
  metric_snapshot,
  runtime_exception,
  submission,
  system_message,
  env_observation,
  outcome_verdict,
};

enum class SpanStatus { ok, error, timeout, unknown };

std::string_view to_string(EventType e) noexcept;
std::string_view to_string(SpanStatus s) noexcept;
std::optional<EventType> parse_event_type(std::string_view s) noexcept;
std::optional<SpanStatus> parse_span_status(std::string_view s) noexcept;

// Reserved meta keys. Everything else in meta is carried through untouched.
namespace meta_key {
inline constexpr std::string_view tool = "tool";
inline constexpr std::string_view call_id = "call_id";
inline constexpr std::string_view args_fp = "args_fp";
inline constexpr std::string_view model = "model";
inline constexpr std::string_view return_code = "return_code";
inline constexpr std::string_view error_code = "error_code";
inline constexpr std::string_view prompt_tokens = "prompt_tokens";
inline constexpr std::string_view completion_tokens = "completion_tokens";
inline constexpr std::string_view total_tokens = "total_tokens";
inline constexpr std::string_view intent = "intent";
inline constexpr std::string_view role = "role";
inline constexpr std::string_view check = "check";
inline constexpr std::string_view verdict = "verdict";
inline constexpr std::string_view failing_checks = "failing_checks";
inline constexpr std::string_view artifact = "artifact";
inline constexpr std::string_view service = "service";
inline constexpr std::string_view state_prefix = "state.";
}  // namespace meta_key

struct Span {
  std::string span_id;
  std::optional<std::string> parent_id;
  std::int64_t step = 0;
  std::int64_t ts_ms = 0;
  EventType event = EventType::system_message;
  SpanStatus status = SpanStatus::unknown;
  std::string payload;
  nlohmann::json meta = nlohmann::json::object();
  // Unknown top-level fields, preserved on write.
  nlohmann::json extra = nlohmann::json::object();

  bool is_failure() const noexcept {
    return status == SpanStatus::error || status == SpanStatus::timeout;
  }
  // String view of a meta value; numbers and booleans are rendered, absent or
  // structured values give "".
  std::string meta_string(std::string_view key) const;
  std::optional<double> meta_number(std::string_view key) const;
  std::string tool() const { return meta_string(meta_key::tool); }

  friend bool operator==(const Span&, const Span&) = default;
};

// Parses one JSON Lines record. Throws Error(malformed_record).
Span parse_span_line(std::string_view line, std::size_t payload_cap = 16 * 1024);
std::string serialize_span(const Span& span);

// Truncates at a UTF-8 boundary and appends the truncation marker so the
// result is at most cap bytes.
std::string truncate_payload(std::string payload, std::size_t cap);
inline constexpr std::string_view kTruncationMarker = "...[truncated]";

struct TraceReadResult {
  std::vector<Span> spans;
  std::size_t malformed_lines = 0;
  std::vector<std::string> malformed_messages;
};

// Reads a whole trace. Blank lines are ignored. With skip_malformed unset the
// first malformed line throws; duplicate span ids always throw.
TraceReadResult read_trace(std::istream& in, const WireConfig& cfg);
TraceReadResult read_trace_file(const std::string& path, const WireConfig& cfg);
void write_trace(std::ostream& out, const std::vector<Span>& spans);

// Structural checks from the trace contract that do not prevent analysis.
std::vector<std::string> check_trace(const std::vector<Span>& spans);

enum class IntentLabel { gather_evidence, edit_artifact, run_verification, prepare_submission, other };
enum class IntentSource { explicit_label, inferred };

std::string_view to_string(IntentLabel l) noexcept;
std::optional<IntentLabel> parse_intent_label(std::string_view s) noexcept;
inline constexpr std::size_t kIntentLabelCount = 5;

struct IntentAnnotation {
  std::int64_t step = 0;
  IntentLabel label = IntentLabel::other;
  IntentSource source = IntentSource::inferred;
  std::vector<std::string> span_ids;
};

enum class ToolAvailability { available, failed, unknown };
std::string_view to_string(ToolAvailability a) noexcept;

struct StateMismatch {
  std::string key;
  std::string expected;
  std::string actual;
};

struct ToolEnvState {
  std::int64_t step = 0;
  std::map<std::string, ToolAvailability> tool_status;
  std::map<std::string, std::string> workflow_state;
  std::vector<std::string> evaluator_signals;
  std::vector<std::string> span_ids;

  // Keys K for which both "K.expected" and "K.actual" are observed at this
  // step and disagree.
  std::vector<StateMismatch> mismatches() const;
};

struct LogEntry {
  std::string span_id;
  std::int64_t step = 0;
  // Error signature template of the payload (see signature.hpp).
  std::string text;
};

enum class Verdict { resolved, unresolved, unknown };
std::string_view to_string(Verdict v) noexcept;

struct OutcomeSignal {
  Verdict verdict = Verdict::unknown;
  std::vector<std::string> failing_checks;
  std::string span_id;
  std::int64_t step = 0;
};

struct TelemetryBundle {
  std::vector<MetricWindow> metrics;
  std::vector<LogEntry> logs;
  std::vector<Span> traces;
  std::vector<IntentAnnotation> intent;
  std::vector<ToolEnvState> env;
  std::optional<std::vector<OutcomeSignal>> outcome;

  std::int64_t max_step() const noexcept { return traces.empty() ? 0 : traces.back().step; }
  const Span* find_span(std::string_view id) const noexcept;
  // Index into traces; -1 when absent.
  std::ptrdiff_t span_index(std::string_view id) const noexcept;
  const IntentAnnotation* intent_at(std::int64_t step) const noexcept;

 // Rebuilds the span-id lookup; call after editing traces by hand.
  void reindex();

 private:
  std::map<std::string, std::size_t, std::less<>> index_;
};

// True for spans whose payload belongs in the logs family.
bool is_error_bearing(const Span& span) noexcept;

// Partitions spans into signal families. Without strict, spans are stably
// sorted by (step, ts_ms) first; with strict, unsorted input throws
// Error(ordering_violation). Metric windows are left empty.
TelemetryBundle build_bundle(std::vector<Span> spans, bool strict, const WireConfig& cfg = {});

// A tool_call joined with the tool_return that answered it. Returns are
// matched by meta.call_id, else to the oldest unanswered call of the same tool.
struct ToolCallRecord {
  std::size_t call_index = 0;
  std::optional<std::size_t> return_index;
  std::string tool;
  std::string fingerprint;
  bool failed = false;
};

std::vector<ToolCallRecord> pair_tool_calls(const std::vector<Span>& traces);

// meta.args_fp when present, else the normalized call payload cut to 120 bytes.
std::string argument_fingerprint(const Span& call);

// Causal: looks only at the spans of the step being labelled.
IntentAnnotation infer_intent(const std::vector<const Span*>& step_spans,
                              const std::vector<std::string>& edit_tools);

}  // namespace failanchor
