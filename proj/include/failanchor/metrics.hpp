#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "failanchor/config.hpp"
#include "failanchor/metric_window.hpp"
#include "failanchor/wire.hpp"

namespace failanchor {

struct SeriesPoint {
  std::int64_t start_step = 0;
  std::int64_t end_step = 0;
  double value = 0.0;
  std::vector<std::string> span_ids;
};

struct MetricSeries {
  Metric metric = Metric::token_velocity;
  std::vector<SeriesPoint> points;

  std::vector<double> values() const;
};

// Slides [s, s + window_len - 1] over [0, max_step] with the given stride,
// clipping the last window to the run. Throws Error(invalid_config) when
// window_len < 2 or stride < 1.
std::vector<MetricWindow> compute_windows(const TelemetryBundle& bundle, const MetricsConfig& cfg);

// Throws Error(unknown_metric).
MetricSeries series_of(const std::vector<MetricWindow>& windows, std::string_view metric_name);
MetricSeries series_of(const std::vector<MetricWindow>& windows, Metric metric);

// Token count carried by one span: total_tokens, else prompt + completion.
double span_tokens(const Span& span);

}  // namespace failanchor
