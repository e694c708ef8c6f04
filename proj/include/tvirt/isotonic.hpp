#pragma once

#include <span>
#include <vector>

namespace tvirt {

/// Non-decreasing step function from weighted pool-adjacent-violators.
class IsotonicStep {
 public:
  IsotonicStep() = default;
  IsotonicStep(std::vector<double> knots, std::vector<double> levels);

  /// Level of the largest knot <= x; the first level below the first knot.
  double operator()(double x) const;

  const std::vector<double>& knots() const noexcept { return knots_; }
  const std::vector<double>& levels() const noexcept { return levels_; }

 private:
  std::vector<double> knots_;
  std::vector<double> levels_;
};

/// Weighted least-squares isotonic fit of y on x. Tied x values are pooled
/// first. weights may be empty (all ones). Throws on empty input or
/// non-positive weights.
IsotonicStep fit_isotonic(std::span<const double> x, std::span<const double> y, std::span<const double> weights = {});

}  // namespace tvirt
