#include <doctest.h>

#include "failanchor/error.hpp"
#include "failanchor/metrics.hpp"
#include "helpers.hpp"

namespace fa = failanchor;
using fa::Metric;
using testutil::Trace;

namespace {

std::vector<fa::MetricWindow> windows_of(const std::vector<fa::Span>& spans, fa::MetricsConfig cfg = {}) {
  return fa::compute_windows(fa::build_bundle(spans, false), cfg);
}

}  // namespace

TEST_CASE("three idle model steps give one quiet window") {
  Trace t;
  for (int s = 0; s < 3; ++s) t.model(s);
  const auto ws = windows_of(t.spans);
  REQUIRE(ws.size() == 1);
  CHECK(ws[0].start_step == 0);
  CHECK(ws[0].end_step == 2);
  CHECK(ws[0][Metric::tool_call_density] == 0.0);
  CHECK(ws[0][Metric::intent_volatility] == 0.0);
  CHECK(ws[0][Metric::retry_dominance] == 0.0);
}

TEST_CASE("four tool calls over eight steps, no retries") {
  Trace t;
  for (int s = 0; s < 8; ++s) {
    t.model(s);
    if (s % 2 == 0) t.tool(s, "read_file", "file_" + std::to_string(s));
  }
  const auto ws = windows_of(t.spans);
  REQUIRE_FALSE(ws.empty());
  CHECK(ws[0][Metric::tool_call_density] == 0.5);
  CHECK(ws[0][Metric::retry_dominance] == 0.0);
  CHECK(ws[0][Metric::tool_switch_volatility] == 0.0);
}

TEST_CASE("two retries of a failed call out of four calls") {
  Trace t;
  t.model(0);
  t.tool(0, "bash", "make", fa::SpanStatus::error, "make: *** [all] Error 2");
  t.model(1);
  t.tool(1, "bash", "make", fa::SpanStatus::error, "make: *** [all] Error 2");
  t.model(2);
  t.tool(2, "bash", "make", fa::SpanStatus::error, "make: *** [all] Error 2");
  t.model(3);
  t.tool(3, "read_file", "Makefile");
  const auto ws = windows_of(t.spans);
  REQUIRE(ws.size() == 1);
  CHECK(ws[0][Metric::retry_dominance] == 0.5);
  // bash, bash, bash, read_file: one switch over three gaps.
  CHECK(ws[0][Metric::tool_switch_volatility] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("a call at the same step as an earlier failure still counts as a retry") {
  Trace t;
  t.model(0);
  t.tool(0, "bash", "x", fa::SpanStatus::error, "boom");
  t.tool(0, "bash", "x", fa::SpanStatus::ok, "ok");
  const auto ws = windows_of(t.spans);
  CHECK(ws[0][Metric::retry_dominance] == 0.5);
}

TEST_CASE("token velocity and context saturation") {
  Trace t;
  t.add(0, fa::EventType::model_response, fa::SpanStatus::ok, "", {{"prompt_tokens", 100000}, {"completion_tokens", 400}});
  t.add(1, fa::EventType::model_response, fa::SpanStatus::ok, "", {{"total_tokens", 1600}});
  t.add(2, fa::EventType::model_response, fa::SpanStatus::ok, "", {{"prompt_tokens", 500000}});
  const auto ws = windows_of(t.spans);
  CHECK(ws[0][Metric::token_velocity] == doctest::Approx((100400.0 + 1600.0 + 500000.0) / 8.0));
  CHECK(ws[0][Metric::context_saturation] == 1.0);

  fa::MetricsConfig cfg;
  cfg.context_limit_tokens = 1e6;
  CHECK(windows_of(t.spans, cfg)[0][Metric::context_saturation] == 0.5);
}

TEST_CASE("windows tile the run with the configured stride") {
  Trace t;
  for (int s = 0; s <= 17; ++s) t.model(s);
  const auto ws = windows_of(t.spans);
  REQUIRE(ws.size() == 4);
  CHECK(ws[0].start_step == 0);
  CHECK(ws[0].end_step == 7);
  CHECK(ws[1].start_step == 4);
  CHECK(ws[3].start_step == 12);
  CHECK(ws[3].end_step == 17);
}

TEST_CASE("recovery progress from state changes, else from intent changes") {
  Trace t;
  t.add(0, fa::EventType::env_observation, fa::SpanStatus::ok, "", {{"state.phase", "a"}});
  t.add(1, fa::EventType::env_observation, fa::SpanStatus::ok, "", {{"state.phase", "b"}});
  t.add(2, fa::EventType::env_observation, fa::SpanStatus::ok, "", {{"state.phase", "b"}});
  t.add(3, fa::EventType::env_observation, fa::SpanStatus::ok, "", {{"state.phase", "c"}});
  CHECK(windows_of(t.spans)[0][Metric::recovery_progress] == 2.0);

  Trace u;
  u.model(0);
  u.tool(1, "grep", "x");
  u.tool(2, "edit_file", "x");
  u.add(3, fa::EventType::verifier_result, fa::SpanStatus::ok, "ok", {{"check", "c"}});
  const auto w = windows_of(u.spans)[0];
  // other -> gather -> edit -> verify: three label changes.
  CHECK(w[Metric::recovery_progress] == 3.0);
  CHECK(w[Metric::intent_volatility] == 1.0);
  CHECK(w[Metric::intent_run_length_ratio] == 0.25);
}

TEST_CASE("bounded metrics stay in [0,1]") {
  Trace t;
  for (int s = 0; s < 30; ++s) {
    t.model(s, 500 * s);
    for (int k = 0; k < 3; ++k) t.tool(s, k % 2 ? "bash" : "grep", "a", k ? fa::SpanStatus::error : fa::SpanStatus::ok);
  }
  for (const auto& w : windows_of(t.spans)) {
    for (Metric m : {Metric::context_saturation, Metric::tool_call_density, Metric::retry_dominance,
                     Metric::intent_volatility, Metric::intent_run_length_ratio, Metric::tool_switch_volatility}) {
      CHECK(w[m] >= 0.0);
      CHECK(w[m] <= 1.0);
    }
    CHECK(w[Metric::token_velocity] >= 0.0);
  }
}

TEST_CASE("series_of projects and reconstructs") {
  Trace t;
  for (int s = 0; s < 14; ++s) {
    t.model(s, 100 + s);
    t.tool(s, s % 3 ? "grep" : "bash", "q" + std::to_string(s % 2));
  }
  const auto ws = windows_of(t.spans);
  REQUIRE(ws.size() == 3);
  CHECK(fa::series_of(ws, "token_velocity").points.size() == 3);
  std::vector<fa::MetricWindow> rebuilt(ws.size());
  for (Metric m : fa::kAllMetrics) {
    const auto series = fa::series_of(ws, fa::to_string(m));
    for (std::size_t i = 0; i < ws.size(); ++i) {
      rebuilt[i][m] = series.points[i].value;
      rebuilt[i].start_step = series.points[i].start_step;
      rebuilt[i].end_step = series.points[i].end_step;
      rebuilt[i].span_ids = series.points[i].span_ids;
    }
  }
  CHECK(rebuilt == ws);
  try {
    fa::series_of(ws, "vibes");
    FAIL("unknown metric accepted");
  } catch (const fa::Error& e) {
    CHECK(e.code() == fa::ErrorCode::unknown_metric);
  }
}

TEST_CASE("invalid window configuration") {
  Trace t;
  t.model(0);
  fa::MetricsConfig cfg;
  cfg.window_len = 1;
  CHECK_THROWS_AS(windows_of(t.spans, cfg), fa::Error);
  cfg.window_len = 8;
  cfg.stride = 0;
  CHECK_THROWS_AS(windows_of(t.spans, cfg), fa::Error);
}

TEST_CASE("metrics are bit-exact across runs") {
  Trace t;
  for (int s = 0; s < 25; ++s) {
    t.model(s, 37 * s + 11);
    t.tool(s, "bash", "cmd" + std::to_string(s % 4), s % 3 ? fa::SpanStatus::ok : fa::SpanStatus::error);
  }
  CHECK(windows_of(t.spans) == windows_of(t.spans));
}
