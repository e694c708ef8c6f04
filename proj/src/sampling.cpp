#include "tvirt/sampling.hpp"

#include "tvirt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tvirt {

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::row: return "row";
    case Regime::column: return "column";
    case Regime::hybrid: return "hybrid";
    case Regime::nlogn: return "nlogn";
  }
  return "?";
}

Regime parse_regime(std::string_view name) {
  if (name == "row") return Regime::row;
  if (name == "column") return Regime::column;
  if (name == "hybrid") return Regime::hybrid;
  if (name == "nlogn") return Regime::nlogn;
  throw std::invalid_argument("unknown sampling regime '" + std::string(name) + "'");
}

void SamplingSpec::validate() const {
  auto fraction_ok = [](double f) { return f > 0.0 && f <= 1.0; };
  if ((regime == Regime::row || regime == Regime::hybrid) && !fraction_ok(alpha))
    throw std::invalid_argument("alpha must lie in (0, 1]");
  if ((regime == Regime::column || regime == Regime::hybrid) && !fraction_ok(beta))
    throw std::invalid_argument("beta must lie in (0, 1]");
  if (regime == Regime::nlogn && !(c > 0.0)) throw std::invalid_argument("C must be > 0");
  if (d_min == 0) throw std::invalid_argument("d_min must be >= 1");
}

std::size_t nlogn_target(std::size_t k, std::size_t j, double c) {
  const double n = static_cast<double>(k + j);
  return static_cast<std::size_t>(std::llround(c * n * std::log(n)));
}

namespace {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[std::max(a, b)] = std::min(a, b);
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

UnionFind components_of(const ObservationMask& mask) {
  UnionFind uf(mask.rows() + mask.cols());
  for (auto [i, j] : mask.cells()) uf.unite(i, mask.rows() + j);
  return uf;
}

std::size_t count_components(const ObservationMask& mask) {
  auto uf = components_of(mask);
  std::size_t n = 0;
  for (std::size_t x = 0; x < mask.rows() + mask.cols(); ++x) n += (uf.find(x) == x);
  return n;
}

// Chooses n of the candidates uniformly without replacement (partial Fisher-Yates).
template <class T>
void choose(std::vector<T>& candidates, std::size_t n, Rng& rng) {
  n = std::min(n, candidates.size());
  for (std::size_t k = 0; k < n; ++k) std::swap(candidates[k], candidates[k + uniform_index(rng, candidates.size() - k)]);
  candidates.resize(n);
}

}  // namespace

ConnectivityReport check_connectivity(const ObservationMask& mask) {
  ConnectivityReport r;
  r.min_agent_degree = mask.cols();
  r.min_item_degree = mask.rows();
  for (std::size_t i = 0; i < mask.rows(); ++i) r.min_agent_degree = std::min(r.min_agent_degree, mask.row_count(i));
  for (std::size_t j = 0; j < mask.cols(); ++j) r.min_item_degree = std::min(r.min_item_degree, mask.col_count(j));
  r.n_components = count_components(mask);
  return r;
}

ObservationMask repair_mask(const ObservationMask& mask, std::size_t d_min, const ObservationMask& forbidden,
                            std::uint64_t seed) {
  if (forbidden.rows() != mask.rows() || forbidden.cols() != mask.cols())
    throw DataError("forbidden mask shape does not match the training mask");
  if (mask.intersects(forbidden)) throw DataError("training mask overlaps forbidden cells");
  const auto k = mask.rows();
  const auto j = mask.cols();

  std::vector<std::size_t> starved_rows, starved_cols;
  for (std::size_t i = 0; i < k; ++i)
    if (j - forbidden.row_count(i) < d_min) starved_rows.push_back(i);
  for (std::size_t c = 0; c < j; ++c)
    if (k - forbidden.col_count(c) < d_min) starved_cols.push_back(c);
  if (!starved_rows.empty() || !starved_cols.empty()) {
    std::ostringstream os;
    os << "cannot reach degree " << d_min << " outside forbidden cells;";
    if (!starved_rows.empty()) {
      os << " starved agent rows:";
      for (auto i : starved_rows) os << ' ' << i;
      os << ';';
    }
    if (!starved_cols.empty()) {
      os << " starved item columns:";
      for (auto c : starved_cols) os << ' ' << c;
    }
    throw InfeasibleError(os.str());
  }

  ObservationMask out = mask;
  auto rng = make_stream(seed, 0x72657061ULL);
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < k; ++i) {
    const auto deg = out.row_count(i);
    if (deg >= d_min) continue;
    free.clear();
    for (std::size_t c = 0; c < j; ++c)
      if (!out(i, c) && !forbidden(i, c)) free.push_back(c);
    choose(free, d_min - deg, rng);
    for (auto c : free) out.set(i, c);
  }
  for (std::size_t c = 0; c < j; ++c) {
    const auto deg = out.col_count(c);
    if (deg >= d_min) continue;
    free.clear();
    for (std::size_t i = 0; i < k; ++i)
      if (!out(i, c) && !forbidden(i, c)) free.push_back(i);
    choose(free, d_min - deg, rng);
    for (auto i : free) out.set(i, c);
  }

  auto uf = components_of(out);
  std::vector<std::pair<std::size_t, std::size_t>> bridges;
  for (;;) {
    std::size_t roots = 0;
    for (std::size_t x = 0; x < k + j; ++x) roots += (uf.find(x) == x);
    if (roots <= 1) break;
    bridges.clear();
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t c = 0; c < j; ++c)
        if (!out(i, c) && !forbidden(i, c) && uf.find(i) != uf.find(k + c)) bridges.emplace_back(i, c);
    if (bridges.empty())
      throw InfeasibleError("observation graph has " + std::to_string(roots) +
                            " components and no non-forbidden pair can bridge them");
    const auto [i, c] = bridges[uniform_index(rng, bridges.size())];
    out.set(i, c);
    uf.unite(i, k + c);
  }
  return out;
}

MaskResult make_mask(std::size_t k, std::size_t j, const SamplingSpec& spec, const ObservationMask& forbidden) {
  spec.validate();
  if (forbidden.rows() != k || forbidden.cols() != j)
    throw DataError("forbidden mask must be " + std::to_string(k) + "x" + std::to_string(j));
  auto rng = make_stream(spec.seed, 1);
  ObservationMask mask(k, j);
  switch (spec.regime) {
    case Regime::row: {
      const auto per_row = static_cast<std::size_t>(std::llround(spec.alpha * static_cast<double>(j)));
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < k; ++i) {
        free.clear();
        for (std::size_t c = 0; c < j; ++c)
          if (!forbidden(i, c)) free.push_back(c);
        choose(free, per_row, rng);
        for (auto c : free) mask.set(i, c);
      }
      break;
    }
    case Regime::column: {
      const auto per_col = static_cast<std::size_t>(std::llround(spec.beta * static_cast<double>(k)));
      std::vector<std::size_t> free;
      for (std::size_t c = 0; c < j; ++c) {
        free.clear();
        for (std::size_t i = 0; i < k; ++i)
          if (!forbidden(i, c)) free.push_back(i);
        choose(free, per_col, rng);
        for (auto i : free) mask.set(i, c);
      }
      break;
    }
    case Regime::hybrid: {
      std::bernoulli_distribution keep(spec.alpha * spec.beta);
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t c = 0; c < j; ++c)
          if (!forbidden(i, c) && keep(rng)) mask.set(i, c);
      break;
    }
    case Regime::nlogn: {
      auto free = forbidden.complement().cells();
      choose(free, nlogn_target(k, j, spec.c), rng);
      for (auto [i, c] : free) mask.set(i, c);
      break;
    }
  }
  MaskResult out;
  out.target_pairs = mask.observed_count();
  out.mask = repair_mask(mask, spec.d_min, forbidden, spec.seed);
  out.report = check_connectivity(out.mask);
  out.report.repaired_pairs = out.mask.observed_count() - out.target_pairs;
  return out;
}

}  // namespace tvirt
