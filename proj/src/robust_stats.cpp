#include "failanchor/robust_stats.hpp"

#include <algorithm>
#include <cmath>

namespace failanchor::stats {

double median(std::span<const double> values) {
  if (values.empty()) return 0.0;
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

double mad(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double m = median(values);
  std::vector<double> dev;
  dev.reserve(values.size());
  for (double x : values) dev.push_back(std::fabs(x - m));
  return median(dev);
}

double mean_abs_deviation(std::span<const double> values, double center) {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (double x : values) sum += std::fabs(x - center);
  return sum / static_cast<double>(values.size());
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) return 0.0;
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  q = std::clamp(q, 0.0, 1.0);
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

std::vector<double> robust_z_scores(std::span<const double> values) {
  if (values.empty()) return {};
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo == *hi) return {};

  const double m = median(values);
  double scale = kMadConsistency * mad(values);
  if (scale == 0.0) scale = kMeanAdConsistency * mean_abs_deviation(values, m);

  std::vector<double> z;
  z.reserve(values.size());
  for (double x : values) z.push_back((x - m) / scale);
  return z;
}

}  // namespace failanchor::stats
