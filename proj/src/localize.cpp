#include "failanchor/localize.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "failanchor/error.hpp"
#include "failanchor/isolation_forest.hpp"
#include "failanchor/robust_stats.hpp"

namespace failanchor {

namespace {

constexpr std::array<std::string_view, 9> kKindNames = {
    "metric_anomaly", "aggregate_metric_anomaly", "execution_error",
    "repeated_failure", "intent_surprise",        "pattern_summary",
    "outcome_mismatch", "infrastructure_clue",    "state_mismatch"};
constexpr std::array<std::string_view, 9> kCategoryNames = {
    "tool", "argument_fingerprint", "error_signature", "return_code", "metric",
    "check", "artifact",            "intent",          "run"};
constexpr std::array<std::string_view, 6> kFamilyNames = {"metrics", "logs", "traces",
                                                          "intent",  "env",  "outcome"};
constexpr std::array<std::string_view, 3> kSeverityNames = {"low", "medium", "high"};

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::string_view, N>& names, std::string_view s) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  return std::nullopt;
}

void add_unique(std::vector<std::string>& into, const std::string& value) {
  if (!value.empty() && std::find(into.begin(), into.end(), value) == into.end()) into.push_back(value);
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string_view to_string(FindingKind k) noexcept { return kKindNames[static_cast<std::size_t>(k)]; }
std::string_view to_string(AnchorCategory c) noexcept { return kCategoryNames[static_cast<std::size_t>(c)]; }
std::string_view to_string(SourceFamily f) noexcept { return kFamilyNames[static_cast<std::size_t>(f)]; }
std::string_view to_string(Severity s) noexcept { return kSeverityNames[static_cast<std::size_t>(s)]; }
std::optional<FindingKind> parse_finding_kind(std::string_view s) noexcept {
  return lookup<FindingKind>(kKindNames, s);
}
std::optional<AnchorCategory> parse_anchor_category(std::string_view s) noexcept {
  return lookup<AnchorCategory>(kCategoryNames, s);
}
std::optional<SourceFamily> parse_source_family(std::string_view s) noexcept {
  return lookup<SourceFamily>(kFamilyNames, s);
}
std::optional<Severity> parse_severity(std::string_view s) noexcept {
  return lookup<Severity>(kSeverityNames, s);
}

Anchor make_anchor(std::string_view key, AnchorCategory category, std::string_view tool) {
  Anchor a;
  a.key = normalize_key(key);
  if (a.key.empty()) a.key = "<empty>";
  a.category = category;
  a.tool = normalize_key(tool);
  return a;
}

std::vector<LocalizedFinding> detect_metric_anomalies(const MetricSeries& series, const LocalizeConfig& cfg) {
  std::vector<LocalizedFinding> out;
  const std::vector<double> values = series.values();
  if (values.size() < std::max<std::size_t>(cfg.min_series_len, 1)) return out;
  const std::vector<double> z = stats::robust_z_scores(values);
  if (z.empty()) return out;

  const double upper = stats::quantile(values, cfg.upper_quantile);
  const double lower = stats::quantile(values, cfg.lower_quantile);
  const TailDirection dir = tail_direction(series.metric);

  for (std::size_t i = 0; i < values.size(); ++i) {
    const double az = std::fabs(z[i]);
    if (!(az >= cfg.z_thresh)) continue;
    const bool high_tail = z[i] > 0 && values[i] >= upper;
    const bool low_tail = z[i] < 0 && values[i] <= lower;
    const bool in_tail = dir == TailDirection::upper   ? high_tail
                         : dir == TailDirection::lower ? low_tail
                                                       : high_tail || low_tail;
    const auto& p = series.points[i];
    if (!in_tail || p.span_ids.empty()) continue;

    LocalizedFinding f;
    f.kind = FindingKind::metric_anomaly;
    f.anchor = make_anchor(to_string(series.metric), AnchorCategory::metric);
    f.source_family = SourceFamily::metrics;
    f.step_range = {p.start_step, p.end_step};
    f.severity = az >= 2.0 * cfg.z_thresh ? Severity::high : Severity::medium;
    f.score = az;
    f.evidence_refs = p.span_ids;
    std::ostringstream summary;
    summary.precision(6);
    summary << to_string(series.metric) << "=" << values[i] << " robust_z=" << z[i];
    f.detail.summary = summary.str();
    out.push_back(std::move(f));
  }
  return out;
}

std::optional<LocalizedFinding> detect_aggregate_anomaly(const std::vector<MetricWindow>& windows,
                                                         const LocalizeConfig& cfg, std::uint64_t seed) {
  if (windows.size() < 4) return std::nullopt;
  std::vector<double> data;
  data.reserve(windows.size() * kMetricCount);
  for (const auto& w : windows) data.insert(data.end(), w.values.begin(), w.values.end());
  FeatureMatrix m{data, windows.size(), kMetricCount};

  IsolationForest forest(static_cast<std::size_t>(cfg.forest_trees), cfg.forest_subsample, seed);
  forest.fit(m);
  const std::vector<double> scores = forest.score_all(m);

  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i].span_ids.empty()) continue;
    if (!best || scores[i] > scores[*best]) best = i;
  }
  if (!best) return std::nullopt;

  const MetricWindow& w = windows[*best];
  LocalizedFinding f;
  f.kind = FindingKind::aggregate_metric_anomaly;
  f.anchor = make_anchor("window-" + std::to_string(w.start_step) + "-" + std::to_string(w.end_step),
                         AnchorCategory::metric);
  f.source_family = SourceFamily::metrics;
  f.step_range = {w.start_step, w.end_step};
  f.severity = Severity::low;
  f.score = scores[*best];
  f.evidence_refs = w.span_ids;
  return f;
}

std::vector<LocalizedFinding> group_error_findings(const TelemetryBundle& bundle) {
  struct Group {
    std::vector<const Span*> spans;
    InfraClass infra = InfraClass::none;
    bool submission = false;
    std::vector<std::string> paths;
    std::vector<std::string> services;
  };
  std::map<std::pair<std::string, std::string>, Group> groups;

  for (const auto& entry : bundle.logs) {
    const Span* s = bundle.find_span(entry.span_id);
    if (s == nullptr) continue;
    Group& g = groups[{normalize_key(s->tool()), entry.text}];
    g.spans.push_back(s);
    if (s->event == EventType::submission) g.submission = true;
    if (!collapse_whitespace(s->payload).empty()) {
      ErrorSignature sig = canonicalize_error(s->payload);
      if (g.infra == InfraClass::none) g.infra = sig.infra_class;
      for (const auto& p : sig.masked.paths) add_unique(g.paths, p);
      for (const auto& e : sig.masked.endpoints) add_unique(g.services, e);
    }
    add_unique(g.paths, s->meta_string(meta_key::artifact));
    add_unique(g.services, s->meta_string(meta_key::service));
  }

  std::vector<LocalizedFinding> out;
  for (const auto& [key, g] : groups) {
    LocalizedFinding f;
    f.kind = FindingKind::execution_error;
    f.anchor = make_anchor(key.second, AnchorCategory::error_signature, key.first);
    f.source_family = SourceFamily::logs;
    f.step_range = {g.spans.front()->step, g.spans.back()->step};
    const bool high = g.spans.size() >= 3 || g.infra != InfraClass::none || g.submission;
    f.severity = high ? Severity::high : Severity::medium;
    f.score = static_cast<double>(g.spans.size());
    for (const Span* s : g.spans) f.evidence_refs.push_back(s->span_id);
    f.detail.signature = key.second;
    f.detail.infra_class = g.infra;
    f.detail.paths = g.paths;
    f.detail.services = g.services;
    out.push_back(f);

    if (g.infra != InfraClass::none) {
      LocalizedFinding clue = f;
      clue.kind = FindingKind::infrastructure_clue;
      clue.source_family = SourceFamily::env;
      clue.severity = Severity::high;
      clue.detail.summary = std::string(to_string(g.infra));
      out.push_back(std::move(clue));
    }
  }
  return out;
}

std::vector<double> transition_surprise(const std::vector<IntentLabel>& labels) {
  std::vector<double> surprise;
  if (labels.size() < 2) return surprise;

  std::set<IntentLabel> vocab(labels.begin(), labels.end());
  std::map<IntentLabel, double> from_counts;
  std::map<std::pair<IntentLabel, IntentLabel>, double> pair_counts;
  for (std::size_t t = 1; t < labels.size(); ++t) {
    from_counts[labels[t - 1]] += 1.0;
    pair_counts[{labels[t - 1], labels[t]}] += 1.0;
  }
  const auto v = static_cast<double>(vocab.size());

  surprise.reserve(labels.size() - 1);
  for (std::size_t t = 1; t < labels.size(); ++t) {
    const IntentLabel a = labels[t - 1];
    const double p = (pair_counts[{a, labels[t]}] + 1.0) / (from_counts[a] + v);
    surprise.push_back(-std::log2(p));
  }
  return surprise;
}

std::vector<LocalizedFinding> score_intent_transitions(const std::vector<IntentAnnotation>& intent,
                                                       const LocalizeConfig& cfg) {
  std::vector<LocalizedFinding> out;
  if (intent.size() < 3) return out;

  std::vector<IntentLabel> labels;
  labels.reserve(intent.size());
  for (const auto& a : intent) labels.push_back(a.label);
  const std::vector<double> surprise = transition_surprise(labels);
  const double tail = stats::quantile(surprise, cfg.surprise_quantile);

  for (std::size_t t = 1; t < intent.size(); ++t) {
    const double s = surprise[t - 1];
    if (!(s > tail && s > cfg.surprise_floor_bits)) continue;
    const auto& prev = intent[t - 1];
    const auto& cur = intent[t];
    if (cur.span_ids.empty()) continue;
    LocalizedFinding f;
    f.kind = FindingKind::intent_surprise;
    f.anchor = make_anchor(std::string(to_string(prev.label)) + "->" + std::string(to_string(cur.label)),
                           AnchorCategory::intent);
    f.source_family = SourceFamily::intent;
    f.step_range = {prev.step, cur.step};
    f.severity = Severity::medium;
    f.score = s;
    f.evidence_refs = cur.span_ids;
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<LocalizedFinding> detect_repeated_failures(const TelemetryBundle& bundle, const LocalizeConfig& cfg) {
  struct Group {
    std::vector<ToolCallRecord> calls;
  };
  std::map<std::pair<std::string, std::string>, Group> groups;
  for (auto& rec : pair_tool_calls(bundle.traces)) {
    if (!rec.failed) continue;
    groups[{normalize_key(rec.tool), rec.fingerprint}].calls.push_back(rec);
  }

  std::vector<LocalizedFinding> out;
  for (const auto& [key, g] : groups) {
    if (g.calls.size() < cfg.repeat_min) continue;
    const auto& [tool, fp] = key;
    LocalizedFinding f;
    f.kind = FindingKind::repeated_failure;
    f.anchor = make_anchor(tool.empty() ? fp : tool + " " + fp, AnchorCategory::argument_fingerprint, tool);
    f.source_family = SourceFamily::traces;
    f.severity = Severity::high;
    f.score = static_cast<double>(g.calls.size());
    std::int64_t lo = INT64_MAX, hi = INT64_MIN;
    for (const auto& c : g.calls) {
      const Span& call = bundle.traces[c.call_index];
      f.evidence_refs.push_back(call.span_id);
      lo = std::min(lo, call.step);
      hi = std::max(hi, call.step);
      if (!c.return_index) continue;
      const Span& ret = bundle.traces[*c.return_index];
      hi = std::max(hi, ret.step);
      if (ret.is_failure() && !collapse_whitespace(ret.payload).empty()) {
        ErrorSignature sig = canonicalize_error(ret.payload);
        if (f.detail.signature.empty()) f.detail.signature = sig.canonical;
        if (f.detail.infra_class == InfraClass::none) f.detail.infra_class = sig.infra_class;
        for (const auto& p : sig.masked.paths) add_unique(f.detail.paths, p);
        for (const auto& e : sig.masked.endpoints) add_unique(f.detail.services, e);
      }
    }
    f.step_range = {lo, hi};
    f.detail.summary = tool + " " + fp;
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<LocalizedFinding> detect_state_mismatches(const TelemetryBundle& bundle) {
  std::map<std::string, LocalizedFinding> by_key;
  std::vector<std::string> order;

  for (const auto& st : bundle.env) {
    for (const auto& mm : st.mismatches()) {
      const std::string exp_key = std::string(meta_key::state_prefix) + mm.key + ".expected";
      const std::string act_key = std::string(meta_key::state_prefix) + mm.key + ".actual";
      auto [it, inserted] = by_key.try_emplace(mm.key);
      LocalizedFinding& f = it->second;
      if (inserted) {
        order.push_back(mm.key);
        f.kind = FindingKind::state_mismatch;
        f.anchor = make_anchor(mm.key, AnchorCategory::artifact);
        f.source_family = SourceFamily::env;
        f.step_range = {st.step, st.step};
        f.severity = Severity::high;
        f.detail.state_key = mm.key;
      }
      f.step_range.end = st.step;
      f.score += 1.0;
      f.detail.expected = mm.expected;
      f.detail.actual = mm.actual;
      for (const auto& id : st.span_ids) {
        const Span* s = bundle.find_span(id);
        if (s == nullptr || s->event != EventType::env_observation) continue;
        if (!s->meta.contains(exp_key) && !s->meta.contains(act_key)) continue;
        add_unique(f.evidence_refs, s->span_id);
        add_unique(f.detail.paths, s->meta_string(meta_key::artifact));
        add_unique(f.detail.services, s->meta_string(meta_key::service));
      }
    }
  }

  std::vector<LocalizedFinding> out;
  for (const auto& key : order) {
    if (!by_key[key].evidence_refs.empty()) out.push_back(std::move(by_key[key]));
  }
  return out;
}

std::vector<LocalizedFinding> outcome_findings(const TelemetryBundle& bundle, const LocalizeConfig& cfg) {
  if (!bundle.outcome || bundle.outcome->empty()) {
    throw Error(ErrorCode::no_outcome_family, "bundle has no outcome_verdict span");
  }
  const auto& outcomes = *bundle.outcome;
  const OutcomeSignal& final_outcome = outcomes.back();

  std::vector<std::string> check_order;
  std::map<std::string, LocalizedFinding> by_check;
  for (const auto& o : outcomes) {
    for (const auto& check : o.failing_checks) {
      const std::string key = normalize_key(check);
      auto [it, inserted] = by_check.try_emplace(key);
      LocalizedFinding& f = it->second;
      if (inserted) {
        check_order.push_back(key);
        f.kind = FindingKind::outcome_mismatch;
        f.anchor = make_anchor(check, AnchorCategory::check);
        f.source_family = SourceFamily::outcome;
        f.step_range = {o.step, o.step};
        f.severity = Severity::high;
        f.detail.check = collapse_whitespace(check);
      }
      f.step_range.end = o.step;
      f.score += 1.0;
      add_unique(f.evidence_refs, o.span_id);
    }
  }

  std::vector<LocalizedFinding> out;
  for (const auto& key : check_order) out.push_back(by_check[key]);

  if (out.empty() && final_outcome.verdict == Verdict::unresolved) {
    LocalizedFinding f;
    f.kind = FindingKind::outcome_mismatch;
    f.anchor = make_anchor(kRunUnresolvedKey, AnchorCategory::run);
    f.source_family = SourceFamily::outcome;
    f.step_range = {final_outcome.step, final_outcome.step};
    f.severity = Severity::high;
    f.score = 1.0;
    f.evidence_refs = {final_outcome.span_id};
    out.push_back(std::move(f));
  }

  if (final_outcome.verdict == Verdict::unresolved) {
    std::vector<const Span*> claims;
    for (const auto& s : bundle.traces) {
      if (s.event != EventType::model_response) continue;
      const std::string text = lowercase(s.payload);
      for (const auto& phrase : cfg.claim_phrases) {
        const std::string p = lowercase(phrase);
        if (!p.empty() && text.find(p) != std::string::npos) {
          claims.push_back(&s);
          break;
        }
      }
    }
    if (!claims.empty()) {
      LocalizedFinding f;
      f.kind = FindingKind::outcome_mismatch;
      // Anchored with the first failing check so fusion puts the claim and
      // the evaluator's verdict in the same record.
      f.anchor = out.empty() ? make_anchor(kRunUnresolvedKey, AnchorCategory::run) : out.front().anchor;
      f.source_family = SourceFamily::traces;
      f.step_range = {claims.front()->step, std::max(claims.back()->step, final_outcome.step)};
      f.severity = Severity::high;
      f.score = static_cast<double>(claims.size());
      for (const Span* s : claims) f.evidence_refs.push_back(s->span_id);
      add_unique(f.evidence_refs, final_outcome.span_id);
      f.detail.success_claim = true;
      if (!out.empty()) f.detail.check = out.front().detail.check;
      out.push_back(std::move(f));
    }
  }
  return out;
}

LocalizedFinding summarize_pattern(const TelemetryBundle& bundle) {
  LocalizedFinding f;
  f.kind = FindingKind::pattern_summary;
  f.anchor = make_anchor("run-timeline", AnchorCategory::run);
  f.source_family = SourceFamily::traces;
  f.step_range = {bundle.traces.empty() ? 0 : bundle.traces.front().step, bundle.max_step()};
  f.severity = Severity::low;

  std::array<int, kIntentLabelCount> histogram{};
  for (const auto& a : bundle.intent) ++histogram[static_cast<std::size_t>(a.label)];

  const Span* last_verification = nullptr;
  for (const auto& s : bundle.traces) {
    if (s.event == EventType::verifier_result) last_verification = &s;
  }

  std::ostringstream os;
  os << "steps=" << bundle.intent.size() << "; intents:";
  for (std::size_t i = 0; i < kIntentLabelCount; ++i) {
    if (histogram[i] > 0) os << " " << to_string(static_cast<IntentLabel>(i)) << "=" << histogram[i];
  }
  os << "; last_verification=";
  if (last_verification != nullptr) {
    const std::string check = last_verification->meta_string(meta_key::check);
    os << (check.empty() ? std::string("verifier") : check) << " " << to_string(last_verification->status)
       << " @" << last_verification->step;
    f.evidence_refs.push_back(last_verification->span_id);
  } else {
    os << "none";
  }
  os << "; outcome=";
  if (bundle.outcome && !bundle.outcome->empty()) {
    os << to_string(bundle.outcome->back().verdict);
    add_unique(f.evidence_refs, bundle.outcome->back().span_id);
  } else {
    os << "absent";
  }
  if (f.evidence_refs.empty() && !bundle.traces.empty()) f.evidence_refs.push_back(bundle.traces.back().span_id);
  f.detail.summary = os.str();
  return f;
}

std::vector<LocalizedFinding> localize(const TelemetryBundle& bundle, const LocalizeConfig& cfg) {
  std::vector<LocalizedFinding> out;
  for (Metric m : kAllMetrics) {
    auto found = detect_metric_anomalies(series_of(bundle.metrics, m), cfg);
    out.insert(out.end(), found.begin(), found.end());
  }
  // The forest is consulted only when no single metric stands out.
  if (out.empty()) {
    if (auto agg = detect_aggregate_anomaly(bundle.metrics, cfg, cfg.forest_seed)) out.push_back(std::move(*agg));
  }

  auto append = [&out](std::vector<LocalizedFinding> found) {
    out.insert(out.end(), std::make_move_iterator(found.begin()), std::make_move_iterator(found.end()));
  };
  append(group_error_findings(bundle));
  append(score_intent_transitions(bundle.intent, cfg));
  append(detect_repeated_failures(bundle, cfg));
  append(detect_state_mismatches(bundle));
  if (bundle.outcome) append(outcome_findings(bundle, cfg));
  if (!bundle.traces.empty()) out.push_back(summarize_pattern(bundle));

  std::stable_sort(out.begin(), out.end(), [](const LocalizedFinding& a, const LocalizedFinding& b) {
    return std::tie(a.kind, a.anchor.key, a.step_range.start) < std::tie(b.kind, b.anchor.key, b.step_range.start);
  });
  return out;
}

}  // namespace failanchor
