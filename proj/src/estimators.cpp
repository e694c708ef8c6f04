#include "tvirt/estimators.hpp"

#include "tvirt/errors.hpp"
#include "tvirt/isotonic.hpp"
#include "tvirt/rng.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tvirt {

Observations observations(const MaskedMatrix& m) {
  Observations obs{m.rows(), m.cols(), {}};
  obs.cells.reserve(m.mask.observed_count());
  for (auto [i, j] : m.mask.cells()) obs.cells.push_back({i, j, m.values(i, j), 1.0});
  return obs;
}

Observations observations(const ScoreMatrix& m) { return observations(m.data()); }

Observations observations(const ScoreMatrix& m, const ObservationMask& train) {
  return observations(MaskedMatrix{m.values(), m.mask() & train});
}

Observations observations(const ScoreMatrix& m, const ObservationMask& train, std::span<const double> weights) {
  if (weights.size() != m.n_agents() * m.n_items())
    throw std::invalid_argument("weights must hold one entry per matrix cell");
  const auto mask = m.mask() & train;
  Observations obs{m.n_agents(), m.n_items(), {}};
  for (auto [i, j] : mask.cells()) {
    const double w = weights[i * m.n_items() + j];
    if (w > 0.0) obs.cells.push_back({i, j, m(i, j), w});
  }
  return obs;
}

double additive_objective(const Observations& obs, const AdditiveParams& p) {
  double total = 0.0;
  for (const auto& c : obs.cells) {
    const double r = c.value - (p.theta(c.i) - p.b(c.j));
    total += c.weight * r * r;
  }
  return total + p.lambda * (p.theta.squaredNorm() + p.b.squaredNorm());
}

namespace {

void require_nonempty(const Observations& obs) {
  if (obs.cells.empty()) throw DataError("no observed training cells");
  for (const auto& c : obs.cells)
    if (c.i >= obs.rows || c.j >= obs.cols) throw DataError("training cell outside matrix bounds");
}

// Row- and column-major adjacency over the weighted cells.
struct Adjacency {
  std::vector<std::size_t> row_start, row_cells, col_start, col_cells;

  explicit Adjacency(const Observations& obs) {
    row_start.assign(obs.rows + 1, 0);
    col_start.assign(obs.cols + 1, 0);
    for (const auto& c : obs.cells) {
      ++row_start[c.i + 1];
      ++col_start[c.j + 1];
    }
    std::partial_sum(row_start.begin(), row_start.end(), row_start.begin());
    std::partial_sum(col_start.begin(), col_start.end(), col_start.begin());
    row_cells.resize(obs.cells.size());
    col_cells.resize(obs.cells.size());
    auto rpos = row_start;
    auto cpos = col_start;
    for (std::size_t k = 0; k < obs.cells.size(); ++k) {
      row_cells[rpos[obs.cells[k].i]++] = k;
      col_cells[cpos[obs.cells[k].j]++] = k;
    }
  }
};

// Connected components of the bipartite graph; agents are nodes [0, K),
// items are [K, K + J).
std::vector<std::size_t> component_labels(const Observations& obs) {
  const auto n = obs.rows + obs.cols;
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& c : obs.cells) {
    auto a = find(c.i);
    auto b = find(obs.rows + c.j);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<std::size_t> label(n);
  for (std::size_t x = 0; x < n; ++x) label[x] = find(x);
  return label;
}

struct AdditiveSolve {
  AdditiveParams params;
  std::vector<double> trace;
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t ops_per_iteration = 0;
  std::vector<std::string> warnings;
};

// Alternating minimization of the ridge objective. After each sweep every
// connected component is shifted by the penalty-optimal constant; the data
// term is invariant along those directions, which are otherwise only damped
// at rate O(lambda). The final parameters are gauge-fixed to sum_j b_j = 0.
AdditiveSolve solve_additive(const Observations& obs, const FitConfig& cfg) {
  require_nonempty(obs);
  if (!(cfg.lambda >= 0.0) || !(cfg.tol > 0.0)) throw std::invalid_argument("fit config needs lambda >= 0, tol > 0");
  const auto k = obs.rows;
  const auto j = obs.cols;
  const Adjacency adj(obs);

  AdditiveSolve out;
  auto& p = out.params;
  p.lambda = cfg.lambda;
  p.theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
  p.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(j));

  std::vector<double> row_w(k, 0.0), col_w(j, 0.0);
  for (const auto& c : obs.cells) {
    row_w[c.i] += c.weight;
    col_w[c.j] += c.weight;
  }
  std::size_t starved_agents = 0, starved_items = 0;
  for (double w : row_w) starved_agents += (w == 0.0);
  for (double w : col_w) starved_items += (w == 0.0);
  if (starved_agents)
    out.warnings.push_back(std::to_string(starved_agents) + " agent(s) without observations pinned to 0");
  if (starved_items)
    out.warnings.push_back(std::to_string(starved_items) + " item(s) without observations pinned to 0");

  for (std::size_t i = 0; i < k; ++i) {
    if (row_w[i] == 0.0) continue;
    double s = 0.0;
    for (auto e = adj.row_start[i]; e < adj.row_start[i + 1]; ++e) {
      const auto& c = obs.cells[adj.row_cells[e]];
      s += c.weight * c.value;
    }
    p.theta(i) = s / row_w[i];
  }

  const auto labels = component_labels(obs);
  std::vector<std::size_t> roots;
  for (std::size_t x = 0; x < k + j; ++x)
    if (labels[x] == x) roots.push_back(x);
  if (roots.size() > 1 + starved_agents + starved_items)
    out.warnings.push_back("observation graph has " + std::to_string(roots.size() - starved_agents - starved_items) +
                           " components; parameters are anchored per component by the ridge term");

  out.ops_per_iteration = 2 * obs.cells.size() + k + j;
  out.trace.push_back(additive_objective(obs, p));

  std::vector<double> comp_sum(k + j), comp_n(k + j);
  Eigen::VectorXd prev_theta, prev_b;
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    prev_theta = p.theta;
    prev_b = p.b;
    for (std::size_t i = 0; i < k; ++i) {
      if (row_w[i] == 0.0) continue;
      double s = 0.0;
      for (auto e = adj.row_start[i]; e < adj.row_start[i + 1]; ++e) {
        const auto& c = obs.cells[adj.row_cells[e]];
        s += c.weight * (c.value + p.b(c.j));
      }
      p.theta(i) = s / (row_w[i] + cfg.lambda);
    }
    for (std::size_t c_idx = 0; c_idx < j; ++c_idx) {
      if (col_w[c_idx] == 0.0) continue;
      double s = 0.0;
      for (auto e = adj.col_start[c_idx]; e < adj.col_start[c_idx + 1]; ++e) {
        const auto& c = obs.cells[adj.col_cells[e]];
        s += c.weight * (p.theta(c.i) - c.value);
      }
      p.b(c_idx) = s / (col_w[c_idx] + cfg.lambda);
    }
    if (cfg.lambda > 0.0) {
      std::fill(comp_sum.begin(), comp_sum.end(), 0.0);
      std::fill(comp_n.begin(), comp_n.end(), 0.0);
      for (std::size_t i = 0; i < k; ++i) {
        comp_sum[labels[i]] += p.theta(i);
        comp_n[labels[i]] += 1.0;
      }
      for (std::size_t c = 0; c < j; ++c) {
        comp_sum[labels[k + c]] += p.b(c);
        comp_n[labels[k + c]] += 1.0;
      }
      for (std::size_t i = 0; i < k; ++i)
        if (row_w[i] > 0.0) p.theta(i) -= comp_sum[labels[i]] / comp_n[labels[i]];
      for (std::size_t c = 0; c < j; ++c)
        if (col_w[c] > 0.0) p.b(c) -= comp_sum[labels[k + c]] / comp_n[labels[k + c]];
    }
    out.trace.push_back(additive_objective(obs, p));
    out.iterations = it + 1;
    const double change = std::max((p.theta - prev_theta).cwiseAbs().maxCoeff(), (p.b - prev_b).cwiseAbs().maxCoeff());
    if (change < cfg.tol) {
      out.converged = true;
      break;
    }
  }
  if (!out.converged)
    out.warnings.push_back("alternating minimization stopped at max_iters=" + std::to_string(cfg.max_iters));

  // Gauge: shift observed nodes so that sum_j b_j = 0; pinned nodes stay 0.
  double b_sum = 0.0;
  std::size_t b_n = 0;
  for (std::size_t c = 0; c < j; ++c)
    if (col_w[c] > 0.0) {
      b_sum += p.b(c);
      ++b_n;
    }
  const double shift = b_n ? b_sum / static_cast<double>(b_n) : 0.0;
  for (std::size_t i = 0; i < k; ++i)
    if (row_w[i] > 0.0) p.theta(i) -= shift;
  for (std::size_t c = 0; c < j; ++c)
    if (col_w[c] > 0.0) p.b(c) -= shift;
  p.gauge_residual = std::abs(p.b.sum());
  return out;
}

FitResult from_solve(AdditiveSolve&& s, std::string tag) {
  FitResult r;
  r.method_tag = std::move(tag);
  r.objective_trace = std::move(s.trace);
  r.iterations = s.iterations;
  r.converged = s.converged;
  r.ops_per_iteration = s.ops_per_iteration;
  r.warnings = std::move(s.warnings);
  r.params = std::move(s.params);
  return r;
}

}  // namespace

FitResult fit_clipped_linear(const Observations& obs, const FitConfig& cfg) {
  auto r = from_solve(solve_additive(obs, cfg), "clipped_linear");
  r.completed = predict(*r.params, cfg.clip_predictions);
  return r;
}

FitResult fit_rasch_link(const Observations& obs, const FitConfig& cfg) {
  if (cfg.link.kind == LinkKind::identity)
    throw std::invalid_argument("Rasch link fit needs a probit or logit link");
  Observations transformed = obs;
  for (auto& c : transformed.cells) c.value = link_forward(c.value, cfg.link);
  auto r = from_solve(solve_additive(transformed, cfg), "rasch_" + to_string(cfg.link.kind));
  const Eigen::MatrixXd link_space = predict(*r.params, false);
  r.completed = link_space.unaryExpr([&](double t) { return link_inverse(t, cfg.link); });
  return r;
}

FitResult fit_isotonic_calibrated(const Observations& obs, const FitConfig& cfg) {
  FitConfig base_cfg = cfg;
  base_cfg.clip_predictions = true;
  auto r = fit_clipped_linear(obs, base_cfg);
  std::vector<double> x, y, w;
  x.reserve(obs.cells.size());
  y.reserve(obs.cells.size());
  w.reserve(obs.cells.size());
  for (const auto& c : obs.cells) {
    x.push_back(r.completed(c.i, c.j));
    y.push_back(c.value);
    w.push_back(c.weight);
  }
  const auto g = fit_isotonic(x, y, w);
  r.completed = r.completed.unaryExpr([&](double v) { return g(v); });
  r.method_tag = "isotonic";
  return r;
}

namespace {

Eigen::MatrixXd observed_fill(const Observations& obs, double fill) {
  Eigen::MatrixXd z = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(obs.rows), static_cast<Eigen::Index>(obs.cols), fill);
  for (const auto& c : obs.cells) z(c.i, c.j) = c.value;
  return z;
}

Eigen::MatrixXd soft_threshold(const Eigen::MatrixXd& z, double reg, double* nuclear) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(z, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd s = (svd.singularValues().array() - reg).cwiseMax(0.0);
  if (nuclear) *nuclear = s.sum();
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

}  // namespace

FitResult fit_nuclear_norm(const Observations& obs, const NuclearNormConfig& cfg) {
  require_nonempty(obs);
  if (!(cfg.reg >= 0.0)) throw std::invalid_argument("nuclear-norm reg must be >= 0");
  FitResult r;
  r.method_tag = "nuclear_norm";
  r.converged = false;
  Eigen::MatrixXd low_rank = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(obs.rows), static_cast<Eigen::Index>(obs.cols));
  Eigen::MatrixXd work = observed_fill(obs, 0.0);
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    for (const auto& c : obs.cells) work(c.i, c.j) = c.value;
    double nuclear = 0.0;
    Eigen::MatrixXd next = soft_threshold(work, cfg.reg, &nuclear);
    const double denom = std::max(low_rank.squaredNorm(), 1e-300);
    const double rel = (next - low_rank).squaredNorm() / denom;
    low_rank = std::move(next);
    double fit = 0.0;
    for (const auto& c : obs.cells) fit += c.weight * std::pow(c.value - low_rank(c.i, c.j), 2);
    r.objective_trace.push_back(0.5 * fit + cfg.reg * nuclear);
    r.iterations = it + 1;
    if (rel < cfg.tol) {
      r.converged = true;
      break;
    }
    work = low_rank;
  }
  if (!r.converged)
    r.warnings.push_back("soft-impute did not converge in " + std::to_string(cfg.max_iters) + " iterations");
  r.completed = std::move(low_rank);
  return r;
}

double select_nuclear_reg(const Observations& obs, std::span<const double> grid, std::uint64_t seed,
                          double validation_fraction, const NuclearNormConfig& base) {
  if (grid.empty()) throw std::invalid_argument("nuclear-norm grid is empty");
  if (grid.size() == 1) return grid.front();
  auto rng = make_stream(seed, 0x6e75636cULL);
  std::vector<std::size_t> order(obs.cells.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(validation_fraction * order.size())));
  if (n_val >= order.size()) return grid.front();
  Observations train{obs.rows, obs.cols, {}}, val{obs.rows, obs.cols, {}};
  for (std::size_t k = 0; k < order.size(); ++k) (k < n_val ? val : train).cells.push_back(obs.cells[order[k]]);
  double best_reg = grid.front();
  double best = std::numeric_limits<double>::infinity();
  for (double reg : grid) {
    NuclearNormConfig cfg = base;
    cfg.reg = reg;
    const auto fit = fit_nuclear_norm(train, cfg);
    double se = 0.0, wsum = 0.0;
    for (const auto& c : val.cells) {
      se += c.weight * std::pow(fit.completed(c.i, c.j) - c.value, 2);
      wsum += c.weight;
    }
    const double rmse = std::sqrt(se / wsum);
    if (rmse < best) {
      best = rmse;
      best_reg = reg;
    }
  }
  return best_reg;
}

FitResult fit_svd_baseline(const Observations& obs, std::size_t rank) {
  require_nonempty(obs);
  if (rank == 0) throw std::invalid_argument("SVD baseline rank must be >= 1");
  double sw = 0.0, swy = 0.0;
  for (const auto& c : obs.cells) {
    sw += c.weight;
    swy += c.weight * c.value;
  }
  const Eigen::MatrixXd z = observed_fill(obs, swy / sw);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(z, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto r = static_cast<Eigen::Index>(std::min<std::size_t>(rank, static_cast<std::size_t>(svd.singularValues().size())));
  FitResult out;
  out.method_tag = "svd";
  out.completed = svd.matrixU().leftCols(r) * svd.singularValues().head(r).asDiagonal() *
                  svd.matrixV().leftCols(r).transpose();
  return out;
}

namespace {

double uv_objective(const Observations& obs, const Eigen::MatrixXd& u, const Eigen::MatrixXd& v, double reg) {
  double total = 0.0;
  for (const auto& c : obs.cells) {
    const double r = c.value - u.row(c.i).dot(v.row(c.j));
    total += c.weight * r * r;
  }
  return total + reg * (u.squaredNorm() + v.squaredNorm());
}

// Solves every row of `target` against fixed `other`: ridge normal equations
// over that row's observed cells.
void uv_half_step(const Observations& obs, const std::vector<std::size_t>& start, const std::vector<std::size_t>& cells,
                  bool rows, Eigen::MatrixXd& target, const Eigen::MatrixXd& other, double reg) {
  const auto r = target.cols();
  for (Eigen::Index t = 0; t < target.rows(); ++t) {
    Eigen::MatrixXd a = reg * Eigen::MatrixXd::Identity(r, r);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(r);
    for (auto e = start[t]; e < start[t + 1]; ++e) {
      const auto& c = obs.cells[cells[e]];
      const auto o = other.row(static_cast<Eigen::Index>(rows ? c.j : c.i)).transpose();
      a.noalias() += c.weight * o * o.transpose();
      rhs.noalias() += c.weight * c.value * o;
    }
    if (start[t] == start[t + 1]) {
      target.row(t).setZero();
      continue;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    Eigen::VectorXd sol = ldlt.solve(rhs);
    if (ldlt.info() != Eigen::Success || !sol.allFinite())
      sol = a.completeOrthogonalDecomposition().solve(rhs);
    target.row(t) = sol.transpose();
  }
}

}  // namespace

FitResult fit_uv(const Observations& obs, const UvConfig& cfg) {
  require_nonempty(obs);
  if (cfg.rank == 0 || !(cfg.reg >= 0.0)) throw std::invalid_argument("UV needs rank >= 1 and reg >= 0");
  const Adjacency adj(obs);
  auto rng = make_stream(cfg.seed, 0x7576ULL);
  std::normal_distribution<double> init(0.0, 0.1);
  const auto r = static_cast<Eigen::Index>(cfg.rank);
  Eigen::MatrixXd u(static_cast<Eigen::Index>(obs.rows), r), v(static_cast<Eigen::Index>(obs.cols), r);
  for (Eigen::Index a = 0; a < u.size(); ++a) u.data()[a] = init(rng);
  for (Eigen::Index a = 0; a < v.size(); ++a) v.data()[a] = init(rng);

  FitResult out;
  out.method_tag = "uv";
  out.converged = false;
  double prev = uv_objective(obs, u, v, cfg.reg);
  out.objective_trace.push_back(prev);
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    uv_half_step(obs, adj.row_start, adj.row_cells, true, u, v, cfg.reg);
    uv_half_step(obs, adj.col_start, adj.col_cells, false, v, u, cfg.reg);
    const double obj = uv_objective(obs, u, v, cfg.reg);
    out.objective_trace.push_back(obj);
    out.iterations = it + 1;
    const double scale = std::max(1.0, std::abs(prev));
    if (obj > prev + 1e-9 * scale) throw std::runtime_error("UV factorization diverged: objective increased");
    if (prev - obj <= cfg.tol * scale) {
      out.converged = true;
      break;
    }
    prev = obj;
  }
  if (!out.converged) out.warnings.push_back("UV factorization stopped at max_iters=" + std::to_string(cfg.max_iters));
  out.completed = u * v.transpose();
  return out;
}

namespace {
constexpr std::array kMethods{Method::clipped_linear, Method::isotonic,     Method::rasch_probit, Method::rasch_logit,
                              Method::nuclear_norm,   Method::svd,          Method::uv};
}

std::span<const Method> all_methods() { return kMethods; }

std::string to_string(Method method) {
  switch (method) {
    case Method::clipped_linear: return "clipped_linear";
    case Method::isotonic: return "isotonic";
    case Method::rasch_probit: return "rasch_probit";
    case Method::rasch_logit: return "rasch_logit";
    case Method::nuclear_norm: return "nuclear_norm";
    case Method::svd: return "svd";
    case Method::uv: return "uv";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (auto m : kMethods)
    if (to_string(m) == name) return m;
  throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

FitResult fit_method(Method method, const Observations& obs, const MethodConfig& cfg) {
  switch (method) {
    case Method::clipped_linear: return fit_clipped_linear(obs, cfg.fit);
    case Method::isotonic: return fit_isotonic_calibrated(obs, cfg.fit);
    case Method::rasch_probit:
    case Method::rasch_logit: {
      FitConfig f = cfg.fit;
      f.link = Link(method == Method::rasch_probit ? LinkKind::probit : LinkKind::logit, cfg.fit.link.clip_bound);
      return fit_rasch_link(obs, f);
    }
    case Method::nuclear_norm: {
      NuclearNormConfig n = cfg.nuclear;
      n.reg = cfg.nuclear_reg ? *cfg.nuclear_reg : select_nuclear_reg(obs, cfg.nuclear_grid, cfg.seed, 0.1, cfg.nuclear);
      return fit_nuclear_norm(obs, n);
    }
    case Method::svd: return fit_svd_baseline(obs, cfg.svd_rank);
    case Method::uv: {
      UvConfig u = cfg.uv;
      u.seed = cfg.seed;
      return fit_uv(obs, u);
    }
  }
  throw std::invalid_argument("unknown method");
}

Eigen::VectorXd abilities(const FitResult& fit) {
  if (fit.params) return fit.params->theta;
  return fit.completed.rowwise().mean();
}

}  // namespace tvirt
