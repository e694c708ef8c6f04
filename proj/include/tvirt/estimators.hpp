#pragma once

#include "tvirt/core.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tvirt {

/// One weighted training cell. Bootstrap refits weight a pair drawn m times by m.
struct Cell {
  std::size_t i = 0;
  std::size_t j = 0;
  double value = 0.0;
  double weight = 1.0;
};

struct Observations {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Cell> cells;
};

/// Every observed cell of m, weight 1.
Observations observations(const MaskedMatrix& m);
Observations observations(const ScoreMatrix& m);
/// Observed cells of m restricted to train.
Observations observations(const ScoreMatrix& m, const ObservationMask& train);
/// Observed cells of m restricted to train, with row-major per-cell weights
/// (length K * J). Zero-weight cells are dropped.
Observations observations(const ScoreMatrix& m, const ObservationMask& train, std::span<const double> weights);

struct FitConfig {
  double lambda = 1e-6;
  std::size_t max_iters = 1000;
  double tol = 1e-10;
  Link link{};
  bool clip_predictions = true;
};

struct FitResult {
  std::optional<AdditiveParams> params;  // set by the additive estimators
  Eigen::MatrixXd completed;             // K x J on the raw score scale
  std::vector<double> objective_trace;   // initial value, then one per iteration
  std::string method_tag;
  std::size_t iterations = 0;
  bool converged = true;
  std::size_t ops_per_iteration = 0;  // cell visits per alternating-minimization sweep
  std::vector<std::string> warnings;
};

/// Ridge objective sum w (s - (theta_i - b_j))^2 + lambda (|theta|^2 + |b|^2).
double additive_objective(const Observations& obs, const AdditiveParams& params);

/// Clipped-linear estimator: alternating exact row/column solves of the ridge
/// least-squares additive model, gauge-fixed so that sum_j b_j = 0, with
/// predictions clamped to [-1, 1] (unless cfg.clip_predictions is off).
/// Throws DataError on an empty observation set.
FitResult fit_clipped_linear(const Observations& obs, const FitConfig& cfg = {});
inline FitResult fit_clipped_linear(const ScoreMatrix& m, const FitConfig& cfg = {}) {
  return fit_clipped_linear(observations(m), cfg);
}

/// Same additive model fitted in probit or logit space; completed matrix is
/// mapped back through the inverse link.
FitResult fit_rasch_link(const Observations& obs, const FitConfig& cfg);

/// Clipped-linear fit followed by a monotone step calibration of predictions
/// to training scores (pool-adjacent-violators).
FitResult fit_isotonic_calibrated(const Observations& obs, const FitConfig& cfg = {});

struct NuclearNormConfig {
  double reg = 0.1;
  std::size_t max_iters = 500;
  double tol = 1e-6;
};

/// Soft-impute: SVD, soft-threshold singular values by reg, restore observed
/// entries, repeat until the relative change drops below tol.
FitResult fit_nuclear_norm(const Observations& obs, const NuclearNormConfig& cfg);

/// Picks reg from grid by RMSE on a validation split carved from obs.
double select_nuclear_reg(const Observations& obs, std::span<const double> grid, std::uint64_t seed,
                          double validation_fraction = 0.1, const NuclearNormConfig& base = {});

/// Global-mean imputation followed by a rank-truncated SVD reconstruction.
FitResult fit_svd_baseline(const Observations& obs, std::size_t rank = 2);

struct UvConfig {
  std::size_t rank = 2;
  double reg = 1e-3;
  std::uint64_t seed = 0;
  std::size_t max_iters = 500;
  double tol = 1e-10;
};

/// Alternating ridge least squares for S ~ U V^T over observed cells.
FitResult fit_uv(const Observations& obs, const UvConfig& cfg);

enum class Method { clipped_linear, isotonic, rasch_probit, rasch_logit, nuclear_norm, svd, uv };

std::string to_string(Method method);
Method parse_method(std::string_view name);
std::span<const Method> all_methods();

struct MethodConfig {
  FitConfig fit{};
  std::optional<double> nuclear_reg;  // unset: choose from nuclear_grid
  std::vector<double> nuclear_grid{0.01, 0.03, 0.1, 0.3};
  NuclearNormConfig nuclear{};
  std::size_t svd_rank = 2;
  UvConfig uv{};
  std::uint64_t seed = 0;
};

FitResult fit_method(Method method, const Observations& obs, const MethodConfig& cfg);

/// Per-agent ability used for ranking: theta when the fit is additive,
/// otherwise the row mean of the completed matrix.
Eigen::VectorXd abilities(const FitResult& fit);

}  // namespace tvirt
