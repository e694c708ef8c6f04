#pragma once

#include "tvirt/core.hpp"
#include "tvirt/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <string>

namespace tvirt {

enum class Regime { row, column, hybrid, nlogn };

std::string to_string(Regime regime);
Regime parse_regime(std::string_view name);

struct SamplingSpec {
  Regime regime = Regime::nlogn;
  double alpha = 0.3;  // row fraction (row, hybrid)
  double beta = 0.3;   // column fraction (column, hybrid)
  double c = 1.0;      // multiplier of (K + J) ln(K + J) (nlogn)
  std::size_t d_min = 3;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on fractions outside (0, 1], C <= 0 or d_min == 0.
  void validate() const;
};

struct ConnectivityReport {
  std::size_t min_agent_degree = 0;
  std::size_t min_item_degree = 0;
  std::size_t n_components = 0;  // over all K + J nodes; isolated nodes count
  std::size_t repaired_pairs = 0;

  bool satisfies(std::size_t d_min) const {
    return min_agent_degree >= d_min && min_item_degree >= d_min && n_components == 1;
  }
};

struct MaskResult {
  ObservationMask mask;
  ConnectivityReport report;
  std::size_t target_pairs = 0;  // regime draw before repair
};

/// round(c (K + J) ln(K + J)).
std::size_t nlogn_target(std::size_t k, std::size_t j, double c);

ConnectivityReport check_connectivity(const ObservationMask& mask);

/// Adds random non-forbidden pairs until every node has degree >= d_min and
/// the bipartite graph is connected. Throws InfeasibleError naming the
/// starved rows/columns when candidates run out.
ObservationMask repair_mask(const ObservationMask& mask, std::size_t d_min, const ObservationMask& forbidden,
                            std::uint64_t seed);

/// Regime draw over non-forbidden cells followed by repair. forbidden must be
/// K x J; pass an empty-pattern mask for no exclusions.
MaskResult make_mask(std::size_t k, std::size_t j, const SamplingSpec& spec, const ObservationMask& forbidden);

}  // namespace tvirt
