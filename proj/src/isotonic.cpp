#include "tvirt/isotonic.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace tvirt {

IsotonicStep::IsotonicStep(std::vector<double> knots, std::vector<double> levels)
    : knots_(std::move(knots)), levels_(std::move(levels)) {
  if (knots_.size() != levels_.size() || knots_.empty())
    throw std::invalid_argument("isotonic step needs matching, non-empty knots and levels");
}

double IsotonicStep::operator()(double x) const {
  auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
  if (it == knots_.begin()) return levels_.front();
  return levels_[static_cast<std::size_t>(std::distance(knots_.begin(), it)) - 1];
}

IsotonicStep fit_isotonic(std::span<const double> x, std::span<const double> y, std::span<const double> weights) {
  const auto n = x.size();
  if (n == 0 || y.size() != n || (!weights.empty() && weights.size() != n))
    throw std::invalid_argument("isotonic fit needs equal-length, non-empty inputs");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

  struct Block {
    double x_first;
    double sum_wy;
    double sum_w;
    std::size_t n_knots;
    double level() const { return sum_wy / sum_w; }
  };
  std::vector<Block> blocks;
  std::vector<double> knots;
  for (auto idx : order) {
    const double w = weights.empty() ? 1.0 : weights[idx];
    if (!(w > 0.0)) throw std::invalid_argument("isotonic weights must be positive");
    if (!knots.empty() && knots.back() == x[idx]) {
      blocks.back().sum_wy += w * y[idx];
      blocks.back().sum_w += w;
    } else {
      knots.push_back(x[idx]);
      blocks.push_back({x[idx], w * y[idx], w, 1});
    }
    // Pool while the last two blocks violate monotonicity.
    while (blocks.size() > 1 && blocks[blocks.size() - 2].level() > blocks.back().level()) {
      auto last = blocks.back();
      blocks.pop_back();
      auto& prev = blocks.back();
      prev.sum_wy += last.sum_wy;
      prev.sum_w += last.sum_w;
      prev.n_knots += last.n_knots;
    }
  }

  std::vector<double> levels;
  levels.reserve(knots.size());
  for (const auto& b : blocks) levels.insert(levels.end(), b.n_knots, b.level());
  return IsotonicStep(std::move(knots), std::move(levels));
}

}  // namespace tvirt
