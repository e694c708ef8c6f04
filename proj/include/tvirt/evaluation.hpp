#pragma once

#include "tvirt/core.hpp"
#include "tvirt/estimators.hpp"
#include "tvirt/exec.hpp"
#include "tvirt/sampling.hpp"
#include "tvirt/stats.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tvirt {

struct HoldoutSplit {
  ObservationMask holdout;
  ObservationMask training_pool;  // complement of holdout
};

/// Exactly round(fraction * K * J) cells, uniformly without replacement.
HoldoutSplit make_holdout(std::size_t k, std::size_t j, double fraction = 0.2, std::uint64_t seed = 0);

/// sqrt(mean over holdout of (completed - observed)^2). Every holdout cell
/// must be observed in m; the holdout must be non-empty.
double holdout_rmse(const Eigen::MatrixXd& completed, const ScoreMatrix& m, const ObservationMask& holdout);
inline double holdout_rmse(const FitResult& fit, const ScoreMatrix& m, const ObservationMask& holdout) {
  return holdout_rmse(fit.completed, m, holdout);
}

/// 1-based ranks with ties sharing their average rank.
std::vector<double> average_ranks(std::span<const double> x);
/// Average-rank Spearman correlation. UndefinedError on a constant input.
double spearman_rho(std::span<const double> a, std::span<const double> b);
/// Kendall tau-b (Knight's O(n log n) algorithm). UndefinedError on a constant input.
double kendall_tau_b(std::span<const double> a, std::span<const double> b);

struct RankCorrelation {
  double spearman = 0.0;
  double kendall = 0.0;
};

RankCorrelation rank_metrics(std::span<const double> theta_dense, std::span<const double> theta_sparse);
inline RankCorrelation rank_metrics(const Eigen::VectorXd& dense, const Eigen::VectorXd& sparse) {
  return rank_metrics(std::span<const double>(dense.data(), static_cast<std::size_t>(dense.size())),
                      std::span<const double>(sparse.data(), static_cast<std::size_t>(sparse.size())));
}

/// P(faithful > problematic) + P(tie) / 2 over faithful/problematic agent
/// pairs; unlabeled agents are ignored. DataError when a class is missing.
double ranking_auc(std::span<const double> per_agent_scores, const AgentLabels& labels);

/// Per-agent mean of the completed scores over all items.
Eigen::VectorXd per_agent_scores(const Eigen::MatrixXd& completed);

struct FitMetrics {
  static constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  double rmse = nan;
  double spearman = nan;
  double kendall = nan;
  double auc = nan;
};

/// Metrics of one fit: holdout RMSE, rank correlation of abilities against
/// reference (when given), ranking AUC (when labels hold both classes).
FitMetrics evaluate_fit(const FitResult& fit, const ScoreMatrix& m, const ObservationMask& holdout,
                        const Eigen::VectorXd* reference, const AgentLabels* labels);

struct MetricEstimate {
  double full_fit = FitMetrics::nan;  // fit on the un-resampled training set
  double estimate = FitMetrics::nan;  // bootstrap median (full_fit when n_boot == 0)
  Interval ci{FitMetrics::nan, FitMetrics::nan};
  double boot_mean = FitMetrics::nan;
  double boot_sd = FitMetrics::nan;
  std::size_t n_defined = 0;

  bool defined() const { return estimate == estimate; }
};

struct EvalReport {
  MetricEstimate rmse;
  MetricEstimate spearman;
  MetricEstimate kendall;
  MetricEstimate auc;
  std::size_t n_boot = 0;
  double realized_coverage = 0.0;  // |train| / (K * J)
  std::size_t train_pairs = 0;
  std::size_t holdout_pairs = 0;
  std::size_t disconnected_resamples = 0;
  std::vector<std::string> warnings;
};

struct EvalOptions {
  Method method = Method::clipped_linear;
  MethodConfig config{};
  std::size_t n_boot = 500;
  std::uint64_t seed = 0;
  double level = 0.95;
  Exec exec = Exec::parallel;
  const AgentLabels* labels = nullptr;
  /// Dense-fit abilities for the rank metrics. When unset, the same method is
  /// fitted on the full training pool (observed cells outside the holdout).
  std::optional<Eigen::VectorXd> reference_abilities;
};

/// Refit on a weighted training set (weights are row-major K * J
/// multiplicities) and score it on the fixed holdout.
FitMetrics evaluate_weighted(const ScoreMatrix& m, const ObservationMask& holdout, const ObservationMask& train,
                             std::span<const double> weights, const EvalOptions& opts,
                             const Eigen::VectorXd* reference);

/// Training pairs are resampled with replacement per replicate (a pair drawn
/// m times carries weight m), refitted, and scored on the original holdout.
/// CIs are percentile intervals of the replicate metrics.
EvalReport bootstrap_eval(const ScoreMatrix& m, const ObservationMask& holdout, const ObservationMask& train,
                          const EvalOptions& opts);

struct SweepOptions {
  MethodConfig config{};
  std::size_t n_boot = 0;
  std::uint64_t seed = 0;
  double level = 0.95;
  Exec exec = Exec::parallel;
  const AgentLabels* labels = nullptr;
  bool include_dense = true;
};

struct SweepRow {
  bool dense = false;  // fitted on the whole training pool
  SamplingSpec spec{};
  Method method = Method::clipped_linear;
  ConnectivityReport connectivity{};
  std::size_t target_pairs = 0;
  EvalReport report{};
  std::string error;  // non-empty when the cell failed
};

/// Every (spec, method) cell gets its own mask and fit; dense rows come first
/// per method when include_dense is set. Cell failures are recorded in the
/// row and do not stop the sweep. Row order is deterministic.
std::vector<SweepRow> sweep(const ScoreMatrix& m, const ObservationMask& holdout, std::span<const SamplingSpec> specs,
                            std::span<const Method> methods, const SweepOptions& opts);

}  // namespace tvirt
