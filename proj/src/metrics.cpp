#include "failanchor/metrics.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "failanchor/error.hpp"

namespace failanchor {

namespace {

constexpr std::array<std::string_view, kMetricCount> kMetricNames = {
    "token_velocity",    "context_saturation",      "tool_call_density",
    "retry_dominance",   "recovery_progress",       "progress_cost_coupling",
    "intent_volatility", "intent_run_length_ratio", "tool_switch_volatility"};

struct CallView {
  std::int64_t step = 0;
  std::int64_t ts_ms = 0;
  std::string tool;
  std::string fingerprint;
  bool failed = false;
  bool retry = false;
};

// Tool calls in canonical order; calls sharing (step, ts_ms) are ordered by
// content so a reshuffled trace yields the same sequence.
std::vector<CallView> canonical_calls(const TelemetryBundle& bundle) {
  std::vector<CallView> calls;
  for (const auto& rec : pair_tool_calls(bundle.traces)) {
    const Span& s = bundle.traces[rec.call_index];
    calls.push_back({s.step, s.ts_ms, rec.tool, rec.fingerprint, rec.failed, false});
  }
  std::sort(calls.begin(), calls.end(), [](const CallView& a, const CallView& b) {
    return std::tie(a.step, a.ts_ms, a.tool, a.fingerprint, a.failed) <
           std::tie(b.step, b.ts_ms, b.tool, b.fingerprint, b.failed);
  });

  // A call is a retry when the same (tool, fingerprint) already failed at a
  // strictly earlier (step, ts_ms).
  std::set<std::pair<std::string, std::string>> failed_before;
  std::size_t i = 0;
  while (i < calls.size()) {
    std::size_t j = i;
    while (j < calls.size() && calls[j].step == calls[i].step && calls[j].ts_ms == calls[i].ts_ms) ++j;
    for (std::size_t k = i; k < j; ++k) calls[k].retry = failed_before.count({calls[k].tool, calls[k].fingerprint}) > 0;
    for (std::size_t k = i; k < j; ++k) {
      if (calls[k].failed) failed_before.insert({calls[k].tool, calls[k].fingerprint});
    }
    i = j;
  }
  return calls;
}

// Steps at which the recorded workflow state differs from the previous record.
// The first record is the baseline and never counts as a change.
std::set<std::int64_t> state_change_steps(const TelemetryBundle& bundle) {
  std::set<std::int64_t> steps;
  const std::map<std::string, std::string>* prev = nullptr;
  for (const auto& st : bundle.env) {
    if (st.workflow_state.empty()) continue;
    if (prev != nullptr && st.workflow_state != *prev) steps.insert(st.step);
    prev = &st.workflow_state;
  }
  return steps;
}

}  // namespace

std::string_view to_string(Metric m) noexcept { return kMetricNames[static_cast<std::size_t>(m)]; }

std::optional<Metric> parse_metric(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kMetricNames.size(); ++i) {
    if (kMetricNames[i] == name) return static_cast<Metric>(i);
  }
  return std::nullopt;
}

TailDirection tail_direction(Metric m) noexcept {
  switch (m) {
    case Metric::recovery_progress:
    case Metric::progress_cost_coupling:
      return TailDirection::lower;
    case Metric::intent_run_length_ratio:
      return TailDirection::both;
    default:
      return TailDirection::upper;
  }
}

double span_tokens(const Span& span) {
  if (auto total = span.meta_number(meta_key::total_tokens)) return std::max(0.0, *total);
  double sum = 0.0;
  if (auto p = span.meta_number(meta_key::prompt_tokens)) sum += std::max(0.0, *p);
  if (auto c = span.meta_number(meta_key::completion_tokens)) sum += std::max(0.0, *c);
  return sum;
}

std::vector<double> MetricSeries::values() const {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.value);
  return out;
}

std::vector<MetricWindow> compute_windows(const TelemetryBundle& bundle, const MetricsConfig& cfg) {
  if (cfg.window_len < 2) throw Error(ErrorCode::invalid_config, "window_len must be >= 2");
  if (cfg.stride < 1) throw Error(ErrorCode::invalid_config, "stride must be >= 1");
  if (bundle.traces.empty()) return {};

  const std::vector<CallView> calls = canonical_calls(bundle);
  const std::set<std::int64_t> changes = state_change_steps(bundle);
  const bool intent_fallback = changes.empty();
  const std::int64_t max_step = bundle.max_step();
  const auto& traces = bundle.traces;

  std::vector<MetricWindow> windows;
  for (std::int64_t start = 0;; start += cfg.stride) {
    const std::int64_t end = std::min<std::int64_t>(start + cfg.window_len - 1, max_step);
    MetricWindow w;
    w.start_step = start;
    w.end_step = end;
    const auto steps = static_cast<double>(end - start + 1);

    double tokens = 0.0;
    double max_prompt = 0.0;
    std::size_t call_spans = 0;
    auto first = std::lower_bound(traces.begin(), traces.end(), start,
                                  [](const Span& s, std::int64_t v) { return s.step < v; });
    for (auto it = first; it != traces.end() && it->step <= end; ++it) {
      w.span_ids.push_back(it->span_id);
      tokens += span_tokens(*it);
      if (auto p = it->meta_number(meta_key::prompt_tokens)) max_prompt = std::max(max_prompt, *p);
      if (it->event == EventType::tool_call) ++call_spans;
    }

    std::size_t window_calls = 0, retries = 0, switches = 0;
    const CallView* prev_call = nullptr;
    for (const auto& c : calls) {
      if (c.step < start || c.step > end) continue;
      ++window_calls;
      if (c.retry) ++retries;
      if (prev_call != nullptr && prev_call->tool != c.tool) ++switches;
      prev_call = &c;
    }

    std::vector<IntentLabel> labels;
    for (const auto& a : bundle.intent) {
      if (a.step >= start && a.step <= end) labels.push_back(a.label);
    }
    std::size_t label_changes = 0;
    for (std::size_t k = 1; k < labels.size(); ++k) {
      if (labels[k] != labels[k - 1]) ++label_changes;
    }

    double progress = 0.0;
    if (intent_fallback) {
      progress = static_cast<double>(label_changes);
    } else {
      progress = static_cast<double>(std::distance(changes.lower_bound(start), changes.upper_bound(end)));
    }

    w[Metric::token_velocity] = tokens / static_cast<double>(cfg.window_len);
    w[Metric::context_saturation] = std::clamp(max_prompt / cfg.context_limit_tokens, 0.0, 1.0);
    w[Metric::tool_call_density] = std::clamp(static_cast<double>(call_spans) / steps, 0.0, 1.0);
    w[Metric::retry_dominance] =
        window_calls == 0 ? 0.0 : static_cast<double>(retries) / static_cast<double>(window_calls);
    w[Metric::recovery_progress] = progress;
    w[Metric::progress_cost_coupling] = progress / std::max(1.0, tokens / 1000.0);
    w[Metric::intent_volatility] =
        labels.size() <= 1 ? 0.0 : static_cast<double>(label_changes) / static_cast<double>(labels.size() - 1);
    // Mean run length over the label count reduces to 1 / number of runs.
    w[Metric::intent_run_length_ratio] = labels.empty() ? 0.0 : 1.0 / static_cast<double>(label_changes + 1);
    w[Metric::tool_switch_volatility] =
        static_cast<double>(switches) / static_cast<double>(std::max<std::size_t>(1, window_calls - (window_calls > 0)));

    windows.push_back(std::move(w));
    if (end >= max_step) break;
  }
  return windows;
}

MetricSeries series_of(const std::vector<MetricWindow>& windows, Metric metric) {
  MetricSeries s;
  s.metric = metric;
  s.points.reserve(windows.size());
  for (const auto& w : windows) s.points.push_back({w.start_step, w.end_step, w[metric], w.span_ids});
  return s;
}

MetricSeries series_of(const std::vector<MetricWindow>& windows, std::string_view metric_name) {
  auto m = parse_metric(metric_name);
  if (!m) throw Error(ErrorCode::unknown_metric, "unknown metric '" + std::string(metric_name) + "'");
  return series_of(windows, *m);
}

}  // namespace failanchor
