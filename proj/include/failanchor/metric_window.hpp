#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace failanchor {

enum class Metric : std::size_t {
  token_velocity,
  context_saturation,
  tool_call_density,
  retry_dominance,
  recovery_progress,
  progress_cost_coupling,
  intent_volatility,
  intent_run_length_ratio,
  tool_switch_volatility,
};

inline constexpr std::size_t kMetricCount = 9;

inline constexpr std::array<Metric, kMetricCount> kAllMetrics = {
    Metric::token_velocity,     Metric::context_saturation,     Metric::tool_call_density,
    Metric::retry_dominance,    Metric::recovery_progress,      Metric::progress_cost_coupling,
    Metric::intent_volatility,  Metric::intent_run_length_ratio, Metric::tool_switch_volatility,
};

std::string_view to_string(Metric m) noexcept;
std::optional<Metric> parse_metric(std::string_view name) noexcept;

// Which tail of a metric's distribution signals trouble.
enum class TailDirection { upper, lower, both };
TailDirection tail_direction(Metric m) noexcept;

struct MetricWindow {
  std::int64_t start_step = 0;
  std::int64_t end_step = 0;
  std::array<double, kMetricCount> values{};
  // Spans whose step falls inside [start_step, end_step], in trace order.
  std::vector<std::string> span_ids;

  double operator[](Metric m) const noexcept { return values[static_cast<std::size_t>(m)]; }
  double& operator[](Metric m) noexcept { return values[static_cast<std::size_t>(m)]; }

  friend bool operator==(const MetricWindow&, const MetricWindow&) = default;
};

}  // namespace failanchor
