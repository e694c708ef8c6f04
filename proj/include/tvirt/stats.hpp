#pragma once

#include <span>
#include <vector>

namespace tvirt {

/// Quantile of ascending-sorted data by linear interpolation between order
/// statistics (position q * (n - 1)). q in [0, 1]; data non-empty.
double quantile_sorted(std::span<const double> sorted, double q);
/// Copies and sorts; NaNs are not allowed.
double quantile(std::span<const double> values, double q);
double median(std::span<const double> values);
double mean(std::span<const double> values);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> values);

struct Interval {
  double low = 0.0;
  double high = 0.0;
  bool contains(double x) const { return low <= x && x <= high; }
  bool excludes_zero() const { return low > 0.0 || high < 0.0; }
};

/// 2.5 / 97.5 percentile interval (for level 0.95).
Interval percentile_interval(std::span<const double> values, double level = 0.95);

}  // namespace tvirt
