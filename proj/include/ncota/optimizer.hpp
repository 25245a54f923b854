#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ncota/channel.hpp"
#include "ncota/codec.hpp"
#include "ncota/core.hpp"
#include "ncota/frame.hpp"
#include "ncota/phy.hpp"
#include "ncota/problems.hpp"
#include "ncota/random.hpp"

namespace ncota {

enum class StepsizeMode { decreasing, constant };

struct StepsizeSchedule {
  double eta0 = 0.1;
  double gamma0 = 0.1;
  double delta = 0.0;
  StepsizeMode mode = StepsizeMode::decreasing;
};

struct Stepsizes {
  double eta = 0.0;
  double gamma = 0.0;
};

/// eta_k = eta0 / (1 + delta k), gamma_k = gamma0 (1 + delta k)^(-3/4).
inline Stepsizes stepsizes(const StepsizeSchedule& s, std::uint64_t k) {
  if (s.mode == StepsizeMode::constant) return {s.eta0, s.gamma0};
  const double base = 1.0 + s.delta * static_cast<double>(k);
  return {s.eta0 / base, s.gamma0 * std::pow(base, -0.75)};
}

/// eta0 = 2/(mu+L), gamma0 = 0.05/rho2, delta = 0.8 mu eta0.
inline StepsizeSchedule baseline_schedule(double mu, double smoothness, double rho2) {
  require(mu > 0.0 && smoothness >= mu && rho2 > 0.0, "baseline_schedule: invalid constants");
  StepsizeSchedule s;
  s.eta0 = 2.0 / (mu + smoothness);
  s.gamma0 = 0.05 / rho2;
  s.delta = 0.8 * mu * s.eta0;
  s.mode = StepsizeMode::decreasing;
  return s;
}

// ---------------------------------------------------------------------------
// Transmit probability minimizing the disagreement-variance bound.

struct PtxInputs {
  double theta = 1.0;
  double varpi = 0.0;
  double components = 1.0;   // M
  double units = 1.0;        // Q
  double noise_ratio = 0.0;  // N0 / (Lambda* E)
};

/// h(p) = sqrt(2(1+2 theta^2)) p^{3/2} + sqrt(Q/M) sqrt(1+varpi^2) (2p-1) + (N0/(Lambda* E)) (3p-2)/sqrt(p)
inline double ptx_residual(const PtxInputs& in, double p) {
  const double sp = std::sqrt(p);
  return std::sqrt(2.0 * (1.0 + 2.0 * in.theta * in.theta)) * p * sp +
         std::sqrt(in.units / in.components) * std::sqrt(1.0 + in.varpi * in.varpi) * (2.0 * p - 1.0) +
         in.noise_ratio * (3.0 * p - 2.0) / sp;
}

/// Number of sign changes of h on the grid p_n = n / (points + 1), n = 1..points.
inline int ptx_sign_changes(const PtxInputs& in, int points = 1000) {
  int changes = 0;
  double prev = ptx_residual(in, 1.0 / (points + 1));
  for (int n = 2; n <= points; ++n) {
    const double cur = ptx_residual(in, static_cast<double>(n) / (points + 1));
    if ((prev < 0.0) != (cur < 0.0)) ++changes;
    prev = cur;
  }
  return changes;
}

/// Root of h in (0, 1) by bisection down to adjacent doubles.
inline double solve_ptx(const PtxInputs& in) {
  require(in.theta >= 0.0 && in.varpi >= 0.0 && in.noise_ratio >= 0.0, "solve_ptx: inputs must be nonnegative");
  require(in.components > 0.0 && in.units > 0.0, "solve_ptx: M and Q must be positive");
  require(ptx_sign_changes(in) == 1, "solve_ptx: h does not change sign exactly once on (0, 1)");
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < 2000; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (ptx_residual(in, mid) < 0.0 ? lo : hi) = mid;
  }
  if (lo <= 0.0) return hi;
  return std::abs(ptx_residual(in, lo)) < std::abs(ptx_residual(in, hi)) ? lo : hi;
}

inline double solve_ptx(double theta, double varpi, int components, int units, double noise, double energy, double max_degree) {
  require(energy > 0.0 && max_degree > 0.0, "solve_ptx: E and Lambda* must be positive");
  return solve_ptx(PtxInputs{theta, varpi, static_cast<double>(components), static_cast<double>(units), noise / (max_degree * energy)});
}

// ---------------------------------------------------------------------------
// One synchronous round of the over-the-air DGD iteration.

struct NcotaConfig {
  const LocalObjectives* problem = nullptr;
  ParamDomain domain;
  Codebook codebook;
  FramePlan plan;
  ChannelSpec channel;
  double energy = 1.0;
  double noise = 0.0;
  std::optional<double> assumed_noise;  // N0 used by receivers; defaults to the true value
  double p_tx = 0.5;
  double phi = 0.0;
  bool phi_max = false;  // per-node phi = 1 - ||w||_1 / (sqrt(d) r)
  bool shifts = true;  // random phases and circular shift
  int batch = 0;  // 0 or >= |D_i| means full batch
  StepsizeSchedule schedule;
  bool mean_field = false;
  Matrix exact_gains;  // Lambda, required in mean-field mode

  void validate() const {
    require(problem != nullptr, "NcotaConfig: no problem bound");
    require(problem->dim() == domain.dim && codebook.dim == domain.dim, "NcotaConfig: dimension mismatch");
    require(plan.components == codebook.size(), "NcotaConfig: frame plan and codebook disagree on M");
    require(p_tx > 0.0 && p_tx < 1.0, "NcotaConfig: p_tx must lie in (0, 1)");
    require(energy > 0.0 && noise >= 0.0, "NcotaConfig: invalid energy or noise");
    require(batch >= 0, "NcotaConfig: batch must be nonnegative");
    if (mean_field) require(exact_gains.rows() == problem->nodes(), "NcotaConfig: mean-field mode needs Lambda");
    else require(channel.nodes() == problem->nodes(), "NcotaConfig: channel and problem disagree on N");
  }
};

struct NodeDiagnostics {
  Vector disagreement;
  Vector gradient;
  bool transmitted = false;
};

/// Test hooks: forced transmit decisions and a forced shift.
struct IterationOverrides {
  std::optional<std::vector<bool>> decisions;
  std::optional<int> shift;
};

struct IterationResult {
  std::vector<ModelVector> states;
  std::vector<NodeDiagnostics> nodes;
  int shift = 0;
};

inline Vector local_gradient(const LocalObjectives& f, int node, const ModelVector& w, int batch, Stream& stream) {
  if (batch <= 0 || batch >= f.sample_count(node)) return f.gradient(node, w);
  return minibatch_gradient(f, node, w, batch, stream);
}

inline IterationResult iterate(std::span<const ModelVector> states, const NcotaConfig& cfg, std::uint64_t k, SeedSpec seed,
                               const IterationOverrides& overrides = {}) {
  const LocalObjectives& f = *cfg.problem;
  const int n = f.nodes();
  require(static_cast<int>(states.size()) == n, "iterate: wrong number of states");
  for (const auto& w : states) require(cfg.domain.contains(w, 1e-12), "iterate: state outside the parameter ball");
  const Stepsizes step = stepsizes(cfg.schedule, k);
  IterationResult out;
  out.nodes.resize(static_cast<std::size_t>(n));

  for (int i = 0; i < n; ++i) {
    Stream s = seed.stream(k, static_cast<std::uint64_t>(i), Purpose::minibatch);
    out.nodes[static_cast<std::size_t>(i)].gradient = local_gradient(f, i, states[static_cast<std::size_t>(i)], cfg.batch, s);
  }

  if (cfg.mean_field) {
    for (int i = 0; i < n; ++i) out.nodes[static_cast<std::size_t>(i)].disagreement = exact_disagreement(i, states, cfg.exact_gains);
  } else {
    const int M = cfg.plan.components;
    const int Q = cfg.plan.resource_units();
    Stream shared = seed.stream(k, kSharedNode, Purpose::shift);
    out.shift = overrides.shift ? *overrides.shift : (cfg.shifts ? draw_shift(M, shared) : 0);
    std::vector<Transmission> tx;
    for (int i = 0; i < n; ++i) {
      bool transmit = false;
      if (overrides.decisions) {
        transmit = (*overrides.decisions)[static_cast<std::size_t>(i)];
      } else {
        Stream s = seed.stream(k, static_cast<std::uint64_t>(i), Purpose::decision);
        transmit = s.bernoulli(cfg.p_tx);
      }
      out.nodes[static_cast<std::size_t>(i)].transmitted = transmit;
      if (!transmit) continue;
      const ModelVector& w = states[static_cast<std::size_t>(i)];
      const EnergyProfile p = cfg.phi_max ? encode_cp_clipped(w, 1.0, cfg.codebook) : encode_cp_clipped(w, cfg.phi, cfg.codebook);
      Stream ph = seed.stream(k, static_cast<std::uint64_t>(i), Purpose::phase);
      const auto phases = cfg.shifts ? draw_phases(Q, ph) : std::vector<double>(static_cast<std::size_t>(Q), 0.0);
      tx.push_back({i, tx_signal(p, cfg.energy, cfg.plan, out.shift, phases)});
    }
    const ChannelRealization channel = draw_realization(cfg.channel, k, cfg.plan, seed);
    const double assumed = cfg.assumed_noise.value_or(cfg.noise);
    for (int i = 0; i < n; ++i) {
      auto& node = out.nodes[static_cast<std::size_t>(i)];
      if (node.transmitted) {
        node.disagreement = Vector::Zero(f.dim());
        continue;
      }
      Stream ns = seed.stream(k, static_cast<std::uint64_t>(i), Purpose::noise);
      const CVector y = rx_signal(i, std::span<const Transmission>(tx), channel, Q, cfg.noise, ns);
      const Vector r = energy_estimates(y, false, cfg.plan, out.shift, cfg.p_tx, cfg.energy, assumed);
      node.disagreement = disagreement(r, cfg.codebook, states[static_cast<std::size_t>(i)]);
    }
  }

  out.states.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& node = out.nodes[static_cast<std::size_t>(i)];
    out.states.push_back(project(states[static_cast<std::size_t>(i)] + step.gamma * node.disagreement - step.eta * node.gradient, cfg.domain));
  }
  return out;
}

/// Called at k = 0, every `stride` iterations and at k = K.
using Observer = std::function<void(std::uint64_t k, std::span<const ModelVector> states)>;

/// Drives `step(states, k) -> next states` for K iterations from w_i = 0.
template <typename Step>
std::vector<ModelVector> run_iterations(int nodes, Index dim, std::uint64_t iterations, std::uint64_t stride, Step&& step,
                                        const Observer& observe) {
  require(stride >= 1, "run: stride must be positive");
  std::vector<ModelVector> states(static_cast<std::size_t>(nodes), ModelVector::Zero(dim));
  if (observe) observe(0, states);
  for (std::uint64_t k = 0; k < iterations; ++k) {
    states = step(std::span<const ModelVector>(states), k);
    const std::uint64_t done = k + 1;
    if (observe && (done % stride == 0 || done == iterations)) observe(done, states);
  }
  return states;
}

inline std::vector<ModelVector> run(const NcotaConfig& cfg, std::uint64_t iterations, SeedSpec seed, std::uint64_t stride = 1,
                                    const Observer& observe = {}) {
  cfg.validate();
  return run_iterations(cfg.problem->nodes(), cfg.problem->dim(), iterations, stride,
                        [&](std::span<const ModelVector> w, std::uint64_t k) { return iterate(w, cfg, k, seed).states; }, observe);
}

}  // namespace ncota
