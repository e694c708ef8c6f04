#include "tvirt/integrability.hpp"

#include "tvirt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tvirt {

double curl(const MaskedMatrix& m, const Rectangle& r) {
  if (r.i == r.i2 || r.j == r.j2 || r.i >= m.rows() || r.i2 >= m.rows() || r.j >= m.cols() || r.j2 >= m.cols() ||
      !m.mask(r.i, r.j) || !m.mask(r.i2, r.j) || !m.mask(r.i, r.j2) || !m.mask(r.i2, r.j2)) {
    std::ostringstream os;
    os << "invalid rectangle (" << r.i << ", " << r.i2 << ", " << r.j << ", " << r.j2
       << "): cells must be distinct and observed";
    throw DataError(os.str());
  }
  return curl(m.values, r);
}

bool admits_rectangle(const ObservationMask& mask) {
  const auto k = mask.rows();
  const auto j = mask.cols();
  for (std::size_t a = 0; a < k; ++a) {
    if (mask.row_count(a) < 2) continue;
    for (std::size_t b = a + 1; b < k; ++b) {
      std::size_t shared = 0;
      for (std::size_t c = 0; c < j && shared < 2; ++c) shared += (mask(a, c) && mask(b, c)) ? 1 : 0;
      if (shared >= 2) return true;
    }
  }
  return false;
}

std::vector<Rectangle> sample_rectangles(const ObservationMask& mask, std::size_t n, Rng& rng) {
  std::vector<Rectangle> out;
  if (n == 0) return out;
  if (mask.rows() < 2 || mask.cols() < 2 || !admits_rectangle(mask))
    throw InfeasibleError("observation mask admits no rectangle with four observed cells");
  out.reserve(n);
  const std::size_t cap = 100 * n;
  const auto k = mask.rows();
  const auto j = mask.cols();
  for (std::size_t attempt = 0; attempt < cap && out.size() < n; ++attempt) {
    Rectangle r;
    r.i = uniform_index(rng, k);
    r.i2 = uniform_index(rng, k - 1);
    if (r.i2 >= r.i) ++r.i2;
    r.j = uniform_index(rng, j);
    r.j2 = uniform_index(rng, j - 1);
    if (r.j2 >= r.j) ++r.j2;
    if (mask(r.i, r.j) && mask(r.i2, r.j) && mask(r.i, r.j2) && mask(r.i2, r.j2)) out.push_back(r);
  }
  if (out.size() < n) {
    std::ostringstream os;
    os << "rectangle sampling accepted " << out.size() << " of " << n << " rectangles within " << cap
       << " draws; mask too sparse";
    throw InfeasibleError(os.str());
  }
  return out;
}

std::vector<Rectangle> sample_rectangles(const ObservationMask& mask, std::size_t n, std::uint64_t seed) {
  auto rng = make_stream(seed);
  return sample_rectangles(mask, n, rng);
}

namespace kernels {

std::vector<double> abs_curls(const Eigen::MatrixXd& values, std::span<const Rectangle> rects, Exec exec) {
  std::vector<double> out(rects.size());
  const auto n = static_cast<std::ptrdiff_t>(rects.size());
  if (exec == Exec::serial) {
    for (std::ptrdiff_t k = 0; k < n; ++k) out[k] = std::abs(curl(values, rects[k]));
    return out;
  }
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < n; ++k) out[k] = std::abs(curl(values, rects[k]));
  return out;
}

}  // namespace kernels

namespace {

CurlSummary summarize(std::vector<double> magnitudes) {
  if (magnitudes.empty()) throw std::invalid_argument("curl summary needs at least one rectangle");
  std::sort(magnitudes.begin(), magnitudes.end());
  CurlSummary s;
  s.median = quantile_sorted(magnitudes, 0.5);
  s.p95 = quantile_sorted(magnitudes, 0.95);
  s.n_rectangles = magnitudes.size();
  s.ecdf = std::move(magnitudes);
  return s;
}

double median_abs_curl(const Eigen::MatrixXd& values, std::span<const Rectangle> rects) {
  auto mags = kernels::abs_curls(values, rects, Exec::serial);
  return median(mags);
}

}  // namespace

CurlSummary curl_summary(const MaskedMatrix& m, std::span<const Rectangle> rects, Exec exec) {
  for (const auto& r : rects) (void)curl(m, r);  // validates every rectangle
  return summarize(kernels::abs_curls(m.values, rects, exec));
}

CurlSummary curl_summary(const Eigen::MatrixXd& dense, std::span<const Rectangle> rects, Exec exec) {
  return summarize(kernels::abs_curls(dense, rects, exec));
}

std::vector<LinkCurl> curl_link_ablation(const ScoreMatrix& m, std::span<const Link> links, std::size_t n_rect,
                                         std::uint64_t seed, Exec exec) {
  const auto rects = sample_rectangles(m.mask(), n_rect, seed);
  std::vector<LinkCurl> out;
  out.reserve(links.size());
  for (const auto& link : links) out.push_back({link, curl_summary(apply_link(m, link), rects, exec)});
  return out;
}

MaskedMatrix resample_matrix(const MaskedMatrix& m, std::span<const std::size_t> rows,
                             std::span<const std::size_t> cols) {
  MaskedMatrix out{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size())),
                   ObservationMask(rows.size(), cols.size())};
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      if (m.mask(rows[r], cols[c])) {
        out.values(r, c) = m.values(rows[r], cols[c]);
        out.mask.set(r, c);
      }
  return out;
}

CurlBootstrapResult curl_bootstrap(const ScoreMatrix& m, std::span<const Link> links,
                                   const CurlBootstrapOptions& opts) {
  if (links.empty()) throw std::invalid_argument("curl bootstrap needs at least one link");
  if (opts.n_boot == 0) throw std::invalid_argument("curl bootstrap needs n_boot >= 1");
  const auto n_links = links.size();
  const auto k = m.n_agents();
  const auto j = m.n_items();

  CurlBootstrapResult result;
  result.n_boot = opts.n_boot;

  // Observed medians on the original matrix share one rectangle sample (stream 0).
  std::vector<double> observed(n_links);
  {
    auto rng = make_stream(opts.seed, 0);
    const auto rects = sample_rectangles(m.mask(), opts.n_rect, rng);
    for (std::size_t l = 0; l < n_links; ++l)
      observed[l] = median_abs_curl(apply_link(m.data(), links[l]).values, rects);
  }

  result.replicate_medians.assign(opts.n_boot, std::vector<double>(n_links));
  std::vector<std::size_t> retries(opts.n_boot, 0);
  for_each_index(opts.n_boot, opts.exec, [&](std::size_t rep) {
    auto rng = make_stream(opts.seed, rep + 1);
    std::vector<std::size_t> rows(k), cols(j);
    for (std::size_t attempt = 0;; ++attempt) {
      for (auto& r : rows) r = uniform_index(rng, k);
      for (auto& c : cols) c = uniform_index(rng, j);
      auto resampled = resample_matrix(m.data(), rows, cols);
      std::vector<Rectangle> rects;
      try {
        rects = sample_rectangles(resampled.mask, opts.n_rect, rng);
      } catch (const InfeasibleError&) {
        if (attempt + 1 >= opts.max_retries)
          throw InfeasibleError("curl bootstrap replicate " + std::to_string(rep) +
                                " admits no rectangles after retries");
        ++retries[rep];
        continue;
      }
      for (std::size_t l = 0; l < n_links; ++l)
        result.replicate_medians[rep][l] = median_abs_curl(apply_link(resampled, links[l]).values, rects);
      break;
    }
  });
  for (auto r : retries) result.n_retries += r;

  std::vector<double> column(opts.n_boot);
  for (std::size_t l = 0; l < n_links; ++l) {
    for (std::size_t rep = 0; rep < opts.n_boot; ++rep) column[rep] = result.replicate_medians[rep][l];
    result.links.push_back({links[l], observed[l], median(column), percentile_interval(column, opts.level)});
  }
  for (std::size_t a = 0; a < n_links; ++a)
    for (std::size_t b = a + 1; b < n_links; ++b) {
      for (std::size_t rep = 0; rep < opts.n_boot; ++rep)
        column[rep] = result.replicate_medians[rep][a] - result.replicate_medians[rep][b];
      result.differences.push_back({links[a].kind, links[b].kind, observed[a] - observed[b], median(column),
                                    percentile_interval(column, opts.level)});
    }
  return result;
}

}  // namespace tvirt
