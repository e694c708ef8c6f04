#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

// Best rank-1 approximation sigma u v^T of a dense row-major matrix by power
// iteration on A^T A. Returns the reconstruction.
inline std::vector<double> best_rank1(const std::vector<double>& a, std::size_t rows, std::size_t cols,
                                      std::size_t iters = 10000) {
  std::vector<double> v(cols, 1.0), u(rows);
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t r = 0; r < rows; ++r) {
      u[r] = 0;
      for (std::size_t c = 0; c < cols; ++c) u[r] += a[r * cols + c] * v[c];
    }
    std::vector<double> next(cols, 0.0);
    for (std::size_t c = 0; c < cols; ++c)
      for (std::size_t r = 0; r < rows; ++r) next[c] += a[r * cols + c] * u[r];
    double norm = 0;
    for (double x : next) norm += x * x;
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < cols; ++c) v[c] = next[c] / norm;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    u[r] = 0;
    for (std::size_t c = 0; c < cols; ++c) u[r] += a[r * cols + c] * v[c];
  }
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = u[r] * v[c];
  return out;
}

}  // namespace oracle
