#include "tvirt/evaluation.hpp"

#include "tvirt/errors.hpp"
#include "tvirt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tvirt {

HoldoutSplit make_holdout(std::size_t k, std::size_t j, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("holdout fraction must lie in (0, 1)");
  const auto total = k * j;
  const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
  std::vector<std::size_t> cells(total);
  std::iota(cells.begin(), cells.end(), std::size_t{0});
  auto rng = make_stream(seed, 0x686f6c64ULL);
  for (std::size_t a = 0; a < n; ++a) std::swap(cells[a], cells[a + uniform_index(rng, total - a)]);
  HoldoutSplit split{ObservationMask(k, j), ObservationMask(k, j, true)};
  for (std::size_t a = 0; a < n; ++a) {
    split.holdout.set(cells[a] / j, cells[a] % j);
    split.training_pool.set(cells[a] / j, cells[a] % j, false);
  }
  return split;
}

double holdout_rmse(const Eigen::MatrixXd& completed, const ScoreMatrix& m, const ObservationMask& holdout) {
  if (holdout.empty()) throw DataError("holdout set is empty");
  if (!m.mask().contains(holdout)) throw DataError("holdout contains cells that are unobserved in the score matrix");
  double se = 0.0;
  for (auto [i, j] : holdout.cells()) se += std::pow(completed(i, j) - m(i, j), 2);
  return std::sqrt(se / static_cast<double>(holdout.observed_count()));
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start;
    while (end + 1 < order.size() && x[order[end + 1]] == x[order[start]]) ++end;
    const double r = 0.5 * static_cast<double>(start + end) + 1.0;
    for (auto p = start; p <= end; ++p) ranks[order[p]] = r;
    start = end + 1;
  }
  return ranks;
}

namespace {

void require_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("rank metrics need equal-length vectors");
  if (a.size() < 2) throw std::invalid_argument("rank metrics need at least two entries");
}

// Merge sort on y counting strict inversions.
std::uint64_t count_inversions(std::vector<double>& y, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const auto mid = lo + (hi - lo) / 2;
  auto swaps = count_inversions(y, buf, lo, mid) + count_inversions(y, buf, mid, hi);
  std::size_t left = lo, right = mid, out = lo;
  while (left < mid && right < hi) {
    if (y[right] < y[left]) {
      swaps += mid - left;
      buf[out++] = y[right++];
    } else {
      buf[out++] = y[left++];
    }
  }
  while (left < mid) buf[out++] = y[left++];
  while (right < hi) buf[out++] = y[right++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            y.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

template <class Eq>
std::uint64_t tied_pairs(std::size_t n, Eq same_as_previous) {
  std::uint64_t total = 0, run = 1;
  for (std::size_t p = 1; p <= n; ++p) {
    if (p < n && same_as_previous(p)) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

}  // namespace

double spearman_rho(std::span<const double> a, std::span<const double> b) {
  require_pair(a, b);
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    sab += (ra[k] - ma) * (rb[k] - mb);
    saa += (ra[k] - ma) * (ra[k] - ma);
    sbb += (rb[k] - mb) * (rb[k] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw UndefinedError("Spearman correlation undefined for a constant vector");
  return sab / std::sqrt(saa * sbb);
}

double kendall_tau_b(std::span<const double> a, std::span<const double> b) {
  require_pair(a, b);
  const auto n = a.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t p, std::size_t q) {
    return a[p] < a[q] || (a[p] == a[q] && b[p] < b[q]);
  });
  const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const auto n1 = tied_pairs(n, [&](std::size_t p) { return a[order[p]] == a[order[p - 1]]; });
  const auto n3 = tied_pairs(n, [&](std::size_t p) {
    return a[order[p]] == a[order[p - 1]] && b[order[p]] == b[order[p - 1]];
  });
  std::vector<double> y(n), buf(n);
  for (std::size_t p = 0; p < n; ++p) y[p] = b[order[p]];
  const auto swaps = count_inversions(y, buf, 0, n);
  const auto n2 = tied_pairs(n, [&](std::size_t p) { return y[p] == y[p - 1]; });
  if (n0 == n1 || n0 == n2) throw UndefinedError("Kendall tau-b undefined for a constant vector");
  const double num = static_cast<double>(n0) - static_cast<double>(n1) - static_cast<double>(n2) +
                     static_cast<double>(n3) - 2.0 * static_cast<double>(swaps);
  return num / std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
}

RankCorrelation rank_metrics(std::span<const double> theta_dense, std::span<const double> theta_sparse) {
  return {spearman_rho(theta_dense, theta_sparse), kendall_tau_b(theta_dense, theta_sparse)};
}

double ranking_auc(std::span<const double> scores, const AgentLabels& labels) {
  labels.require_covers(scores.size());
  std::vector<double> pooled;
  std::size_t n_faithful = 0, n_problematic = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == AgentTag::faithful) {
      pooled.insert(pooled.begin() + static_cast<std::ptrdiff_t>(n_faithful), scores[i]);
      ++n_faithful;
    } else if (labels[i] == AgentTag::problematic) {
      pooled.push_back(scores[i]);
      ++n_problematic;
    }
  }
  if (n_faithful == 0 || n_problematic == 0)
    throw DataError("ranking AUC needs at least one faithful and one problematic agent");
  // Mann-Whitney U from average ranks counts ties as one half.
  const auto ranks = average_ranks(pooled);
  const double rank_sum = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(n_faithful), 0.0);
  const double nf = static_cast<double>(n_faithful);
  const double u = rank_sum - nf * (nf + 1.0) / 2.0;
  return u / (nf * static_cast<double>(n_problematic));
}

Eigen::VectorXd per_agent_scores(const Eigen::MatrixXd& completed) { return completed.rowwise().mean(); }

FitMetrics evaluate_fit(const FitResult& fit, const ScoreMatrix& m, const ObservationMask& holdout,
                        const Eigen::VectorXd* reference, const AgentLabels* labels) {
  FitMetrics out;
  out.rmse = holdout_rmse(fit, m, holdout);
  if (reference) {
    try {
      const auto rc = rank_metrics(*reference, abilities(fit));
      out.spearman = rc.spearman;
      out.kendall = rc.kendall;
    } catch (const UndefinedError&) {
    }
  }
  if (labels && labels->count(AgentTag::faithful) > 0 && labels->count(AgentTag::problematic) > 0) {
    const Eigen::VectorXd s = per_agent_scores(fit.completed);
    out.auc = ranking_auc(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), *labels);
  }
  return out;
}

FitMetrics evaluate_weighted(const ScoreMatrix& m, const ObservationMask& holdout, const ObservationMask& train,
                             std::span<const double> weights, const EvalOptions& opts,
                             const Eigen::VectorXd* reference) {
  const auto obs = observations(m, train, weights);
  const auto fit = fit_method(opts.method, obs, opts.config);
  return evaluate_fit(fit, m, holdout, reference, opts.labels);
}

namespace {

MetricEstimate summarize_metric(double full, const std::vector<FitMetrics>& reps, double FitMetrics::*field,
                                double level) {
  MetricEstimate e;
  e.full_fit = full;
  std::vector<double> vals;
  for (const auto& r : reps)
    if (r.*field == r.*field) vals.push_back(r.*field);
  e.n_defined = vals.size();
  if (reps.empty()) {
    e.estimate = full;
    return e;
  }
  if (vals.empty()) return e;
  e.estimate = median(vals);
  e.ci = percentile_interval(vals, level);
  e.boot_mean = mean(vals);
  e.boot_sd = stddev(vals);
  return e;
}

}  // namespace

EvalReport bootstrap_eval(const ScoreMatrix& m, const ObservationMask& holdout, const ObservationMask& train,
                          const EvalOptions& opts) {
  if (train.intersects(holdout)) throw DataError("training mask overlaps the holdout set");
  const auto k = m.n_agents();
  const auto j = m.n_items();
  EvalReport report;
  report.n_boot = opts.n_boot;

  const ObservationMask eval_holdout = holdout & m.mask();
  if (eval_holdout.observed_count() < holdout.observed_count())
    report.warnings.push_back(std::to_string(holdout.observed_count() - eval_holdout.observed_count()) +
                              " holdout cell(s) unobserved in the matrix were skipped");
  const ObservationMask train_obs = train & m.mask();
  const auto train_cells = train_obs.cells();
  if (train_cells.empty()) throw DataError("no observed training cells");
  report.train_pairs = train_cells.size();
  report.holdout_pairs = eval_holdout.observed_count();
  report.realized_coverage = static_cast<double>(train_cells.size()) / static_cast<double>(k * j);

  Eigen::VectorXd reference;
  if (opts.reference_abilities) {
    reference = *opts.reference_abilities;
  } else {
    const auto pool = m.mask() & holdout.complement();
    reference = abilities(fit_method(opts.method, observations(m, pool), opts.config));
  }

  std::vector<double> ones(k * j, 0.0);
  for (auto [i, c] : train_cells) ones[i * j + c] = 1.0;
  const auto full = evaluate_weighted(m, eval_holdout, train_obs, ones, opts, &reference);

  std::vector<FitMetrics> reps(opts.n_boot);
  std::vector<std::uint8_t> disconnected(opts.n_boot, 0);
  for_each_index(opts.n_boot, opts.exec, [&](std::size_t rep) {
    auto rng = make_stream(opts.seed, rep + 1);
    std::vector<double> weights(k * j, 0.0);
    ObservationMask support(k, j);
    for (std::size_t draw = 0; draw < train_cells.size(); ++draw) {
      const auto [i, c] = train_cells[uniform_index(rng, train_cells.size())];
      weights[i * j + c] += 1.0;
      support.set(i, c);
    }
    if (support.intersects(eval_holdout)) throw std::logic_error("bootstrap resample touched the holdout");
    disconnected[rep] = check_connectivity(support).n_components > 1 ? 1 : 0;
    reps[rep] = evaluate_weighted(m, eval_holdout, train_obs, weights, opts, &reference);
  });
  report.disconnected_resamples = static_cast<std::size_t>(std::count(disconnected.begin(), disconnected.end(), 1));

  report.rmse = summarize_metric(full.rmse, reps, &FitMetrics::rmse, opts.level);
  report.spearman = summarize_metric(full.spearman, reps, &FitMetrics::spearman, opts.level);
  report.kendall = summarize_metric(full.kendall, reps, &FitMetrics::kendall, opts.level);
  report.auc = summarize_metric(full.auc, reps, &FitMetrics::auc, opts.level);
  return report;
}

std::vector<SweepRow> sweep(const ScoreMatrix& m, const ObservationMask& holdout, std::span<const SamplingSpec> specs,
                            std::span<const Method> methods, const SweepOptions& opts) {
  const auto k = m.n_agents();
  const auto j = m.n_items();
  const ObservationMask pool = m.mask() & holdout.complement();
  const ObservationMask forbidden = pool.complement();

  // Dense references, one per method.
  std::vector<Eigen::VectorXd> references(methods.size());
  std::vector<std::string> reference_errors(methods.size());
  for_each_index(methods.size(), opts.exec, [&](std::size_t mi) {
    MethodConfig cfg = opts.config;
    cfg.seed = splitmix64(opts.seed ^ 0x64656e7365ULL);
    try {
      references[mi] = abilities(fit_method(methods[mi], observations(m, pool), cfg));
    } catch (const std::exception& e) {
      reference_errors[mi] = e.what();
    }
  });

  // Masks, one per spec.
  std::vector<MaskResult> masks(specs.size());
  std::vector<std::string> mask_errors(specs.size());
  for_each_index(specs.size(), opts.exec, [&](std::size_t si) {
    try {
      masks[si] = make_mask(k, j, specs[si], forbidden);
    } catch (const std::exception& e) {
      mask_errors[si] = e.what();
    }
  });

  std::vector<SweepRow> rows;
  std::vector<std::size_t> row_spec;  // index into specs; unused for dense rows
  if (opts.include_dense)
    for (auto method : methods) {
      SweepRow row;
      row.dense = true;
      row.method = method;
      row.connectivity = check_connectivity(pool);
      row.target_pairs = pool.observed_count();
      rows.push_back(row);
      row_spec.push_back(0);
    }
  for (std::size_t si = 0; si < specs.size(); ++si)
    for (auto method : methods) {
      SweepRow row;
      row.spec = specs[si];
      row.method = method;
      row.connectivity = masks[si].report;
      row.target_pairs = masks[si].target_pairs;
      row.error = mask_errors[si];
      rows.push_back(row);
      row_spec.push_back(si);
    }

  for_each_index(rows.size(), opts.exec, [&](std::size_t r) {
    auto& row = rows[r];
    if (!row.error.empty()) return;
    const auto mi = static_cast<std::size_t>(std::find(methods.begin(), methods.end(), row.method) - methods.begin());
    if (!reference_errors[mi].empty()) {
      row.error = "dense reference fit failed: " + reference_errors[mi];
      return;
    }
    EvalOptions eo;
    eo.method = row.method;
    eo.config = opts.config;
    eo.config.seed = splitmix64(opts.seed ^ 0x64656e7365ULL);
    eo.n_boot = opts.n_boot;
    eo.seed = splitmix64(opts.seed + 0x9e37ULL * (r + 1));
    eo.level = opts.level;
    eo.exec = Exec::serial;
    eo.labels = opts.labels;
    eo.reference_abilities = references[mi];
    const ObservationMask& train = row.dense ? pool : masks[row_spec[r]].mask;
    try {
      row.report = bootstrap_eval(m, holdout, train, eo);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });
  return rows;
}

}  // namespace tvirt
