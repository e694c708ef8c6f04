#pragma once

#include "tvirt/core.hpp"
#include "tvirt/exec.hpp"
#include "tvirt/rng.hpp"
#include "tvirt/stats.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tvirt {

/// Agents (i, i2) and items (j, j2) at distinct positions.
struct Rectangle {
  std::size_t i = 0;
  std::size_t i2 = 0;
  std::size_t j = 0;
  std::size_t j2 = 0;

  friend bool operator==(const Rectangle&, const Rectangle&) = default;
};

/// Signed rectangle deviation s_ij - s_i2j - s_ij2 + s_i2j2. Throws DataError
/// when any of the four cells is unobserved.
double curl(const MaskedMatrix& m, const Rectangle& r);
/// Unchecked variant for fully observed matrices.
inline double curl(const Eigen::MatrixXd& v, const Rectangle& r) {
  return v(r.i, r.j) - v(r.i2, r.j) - v(r.i, r.j2) + v(r.i2, r.j2);
}

/// True when some pair of rows shares at least two observed columns.
bool admits_rectangle(const ObservationMask& mask);

/// Uniform rejection sampling over valid rectangles. Gives up with
/// InfeasibleError after 100 * n draws, or immediately if the mask admits no
/// rectangle at all.
std::vector<Rectangle> sample_rectangles(const ObservationMask& mask, std::size_t n, std::uint64_t seed);
std::vector<Rectangle> sample_rectangles(const ObservationMask& mask, std::size_t n, Rng& rng);

namespace kernels {
/// |curl| for every rectangle; serial reference and OpenMP paths produce
/// identical vectors.
std::vector<double> abs_curls(const Eigen::MatrixXd& values, std::span<const Rectangle> rects, Exec exec);
}  // namespace kernels

struct CurlSummary {
  double median = 0.0;
  double p95 = 0.0;
  std::size_t n_rectangles = 0;
  std::vector<double> ecdf;  // sorted |curl| values
};

/// Median and P95 of |curl| over rects. Throws on empty rects or on a
/// rectangle touching an unobserved cell.
CurlSummary curl_summary(const MaskedMatrix& m, std::span<const Rectangle> rects, Exec exec = Exec::parallel);
CurlSummary curl_summary(const Eigen::MatrixXd& dense, std::span<const Rectangle> rects, Exec exec = Exec::parallel);

struct LinkCurl {
  Link link;
  CurlSummary summary;
};

/// One shared rectangle sample, every link evaluated on it.
std::vector<LinkCurl> curl_link_ablation(const ScoreMatrix& m, std::span<const Link> links, std::size_t n_rect,
                                         std::uint64_t seed, Exec exec = Exec::parallel);

struct CurlBootstrapOptions {
  std::size_t n_boot = 500;
  std::size_t n_rect = 20000;
  std::uint64_t seed = 0;
  std::size_t max_retries = 20;
  double level = 0.95;
  Exec exec = Exec::parallel;
};

struct LinkBootstrap {
  Link link;
  double observed_median = 0.0;  // on the original matrix
  double estimate = 0.0;         // median of replicate medians
  Interval ci;
};

/// median(a) - median(b) for one ordered pair of links.
struct CurlDifference {
  LinkKind a = LinkKind::identity;
  LinkKind b = LinkKind::identity;
  double observed = 0.0;
  double estimate = 0.0;
  Interval ci;
  bool significant() const { return ci.excludes_zero(); }
};

struct CurlBootstrapResult {
  std::vector<LinkBootstrap> links;
  std::vector<CurlDifference> differences;
  std::size_t n_boot = 0;
  std::size_t n_retries = 0;
  /// replicate_medians[b][l]: median |curl| of link l in replicate b.
  std::vector<std::vector<double>> replicate_medians;
};

/// Agents and items are resampled with replacement per replicate; repeated
/// rows/columns occupy distinct positions. Each replicate draws fresh
/// rectangles shared by all links and uses its own (seed, replicate) stream.
CurlBootstrapResult curl_bootstrap(const ScoreMatrix& m, std::span<const Link> links,
                                   const CurlBootstrapOptions& opts);

/// Matrix formed from rows[r] and cols[c] of m.
MaskedMatrix resample_matrix(const MaskedMatrix& m, std::span<const std::size_t> rows,
                             std::span<const std::size_t> cols);

}  // namespace tvirt
