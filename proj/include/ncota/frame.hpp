#pragma once

#include <cmath>
#include <vector>

#include "ncota/core.hpp"

namespace ncota {

/// OFDM frame geometry plus the partition of its resource units among the
/// M signal components. Indices are 0-based throughout: resource unit q sits
/// on OFDM symbol q / SC, subcarrier q % SC.
struct FramePlan {
  int symbols = 1;
  int subcarriers = 1;
  int cyclic_prefix = 0;
  int components = 1;
  std::vector<std::vector<int>> sets;
  std::vector<int> owner;  // owner[q] = m with q in sets[m]

  int resource_units() const noexcept { return symbols * subcarriers; }
  int set_size(int m) const { return static_cast<int>(sets[static_cast<std::size_t>(m)].size()); }
  int subcarrier_of(int q) const noexcept { return q % subcarriers; }
};

/// Strided partition: unit q belongs to set q mod M.
inline std::vector<std::vector<int>> build_partition(int units, int components) {
  require(components >= 1, "build_partition: need at least one component");
  require(units >= components, "build_partition: fewer resource units than components");
  std::vector<std::vector<int>> sets(static_cast<std::size_t>(components));
  for (int q = 0; q < units; ++q) sets[static_cast<std::size_t>(q % components)].push_back(q);
  return sets;
}

inline FramePlan make_frame_plan(int symbols, int subcarriers, int cyclic_prefix, int components) {
  require(symbols >= 1 && subcarriers >= 1, "FramePlan: symbols and subcarriers must be positive");
  require(cyclic_prefix >= 0, "FramePlan: negative cyclic prefix");
  FramePlan plan;
  plan.symbols = symbols;
  plan.subcarriers = subcarriers;
  plan.cyclic_prefix = cyclic_prefix;
  plan.components = components;
  plan.sets = build_partition(plan.resource_units(), components);
  plan.owner.assign(static_cast<std::size_t>(plan.resource_units()), 0);
  for (int m = 0; m < components; ++m)
    for (int q : plan.sets[static_cast<std::size_t>(m)]) plan.owner[static_cast<std::size_t>(q)] = m;
  return plan;
}

/// u_m: sqrt(Q / R_m) on the units of set m, zero elsewhere.
inline Vector preamble(int m, const FramePlan& plan) {
  require(m >= 0 && m < plan.components, "preamble: component index out of range");
  const int Q = plan.resource_units();
  Vector u = Vector::Zero(Q);
  const double level = std::sqrt(static_cast<double>(Q) / plan.set_size(m));
  for (int q : plan.sets[static_cast<std::size_t>(m)]) u[q] = level;
  return u;
}

/// Component m lands on set (m + shift) mod M.
inline int shifted_set(int m, int shift, int components) noexcept { return (m + shift) % components; }

/// O * (SC + CP) / W_tot, in seconds.
inline double frame_duration(const FramePlan& plan, double bandwidth_hz) {
  require(bandwidth_hz > 0.0, "frame_duration: bandwidth must be positive");
  return static_cast<double>(plan.symbols) * (plan.subcarriers + plan.cyclic_prefix) / bandwidth_hz;
}

}  // namespace ncota
