#pragma once

#include <span>
#include <vector>

namespace failanchor::stats {

double median(std::span<const double> values);
// Median absolute deviation around the median (unscaled).
double mad(std::span<const double> values);
double mean_abs_deviation(std::span<const double> values, double center);
// Linear-interpolation empirical quantile (position q*(n-1)); q clamped to [0,1].
double quantile(std::span<const double> values, double q);

inline constexpr double kMadConsistency = 1.4826;
// Normal-consistency factor for the mean absolute deviation, sqrt(pi/2).
inline constexpr double kMeanAdConsistency = 1.2533141373155001;

// Robust z-scores of every value. Empty when the series is constant. When the
// MAD is zero but the series is not constant the scale falls back to the mean
// absolute deviation around the median.
std::vector<double> robust_z_scores(std::span<const double> values);

}  // namespace failanchor::stats
