#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ncota/codec.hpp"
#include "ncota/core.hpp"
#include "ncota/optimizer.hpp"
#include "ncota/phy.hpp"
#include "ncota/problems.hpp"

namespace ncota {

struct TheoryConstants {
  double mu = 1.0;
  double smoothness = 1.0;  // L
  double rho2 = 1.0;
  double rhoN = 1.0;
  double max_degree = 1.0;  // Lambda*
  double theta = 1.0;
  double varpi = 0.0;
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  double grad_star = 0.0;
  double zeta = 0.0;
  double diameter = 0.0;  // dm(W)
  int nodes = 1;
  int components = 1;  // M
  int units = 1;       // Q
  double energy = 1.0;
  double noise = 0.0;
  double p_tx = 0.5;
};

/// maxdist^2 / (1 - p) [sqrt(M/Q) sqrt(2(1+2 theta^2)) Lambda* + sqrt(1+varpi^2)/sqrt(p) Lambda* + sqrt(M/Q) N0 / (E p)]^2
inline double sigma1_bound(const TheoryConstants& c, double max_distance) {
  require(c.p_tx > 0.0 && c.p_tx < 1.0, "sigma1_bound: p_tx must lie in (0, 1)");
  require(c.energy > 0.0 && c.components > 0 && c.units > 0, "sigma1_bound: invalid E, M or Q");
  const double ratio = std::sqrt(static_cast<double>(c.components) / c.units);
  const double inner = ratio * std::sqrt(2.0 * (1.0 + 2.0 * c.theta * c.theta)) * c.max_degree +
                       std::sqrt(1.0 + c.varpi * c.varpi) / std::sqrt(c.p_tx) * c.max_degree + ratio * c.noise / (c.energy * c.p_tx);
  return max_distance * max_distance / (1.0 - c.p_tx) * inner * inner;
}

inline double sigma1_bound(const TheoryConstants& c, const Codebook& cb) { return sigma1_bound(c, cb.max_pairwise_distance()); }

struct ConditionCheck {
  bool c1 = false;
  bool c2 = false;
  bool c3 = false;
};

/// eta/gamma threshold zeta mu rho2 / (sqrt(N) grad* L); unbounded when grad* = 0.
inline double c2_threshold(const TheoryConstants& c) {
  if (c.grad_star == 0.0) return std::numeric_limits<double>::infinity();
  return c.zeta * c.mu * c.rho2 / (std::sqrt(static_cast<double>(c.nodes)) * c.grad_star * c.smoothness);
}

inline ConditionCheck check_conditions(const TheoryConstants& c, const StepsizeSchedule& s, std::uint64_t k) {
  const Stepsizes now = stepsizes(s, k);
  const Stepsizes next = stepsizes(s, k + 1);
  ConditionCheck out;
  out.c1 = now.eta * (c.mu + c.smoothness) + now.gamma * c.rhoN <= 2.0;
  out.c2 = now.eta / now.gamma <= c2_threshold(c);
  out.c3 = now.gamma / now.eta <= next.gamma / next.eta;
  return out;
}

/// Smallest k with C1 and C2. Both left-hand sides decrease in k under the
/// decreasing schedule, so doubling then bisection finds it.
inline std::uint64_t kappa_bar(const TheoryConstants& c, const StepsizeSchedule& s, std::uint64_t cap = 1'000'000'000) {
  auto holds = [&](std::uint64_t k) {
    const auto r = check_conditions(c, s, k);
    return r.c1 && r.c2;
  };
  if (holds(0)) return 0;
  require(s.mode == StepsizeMode::decreasing && s.delta > 0.0, "kappa_bar: conditions fail at k = 0 and the stepsizes never decrease");
  std::uint64_t lo = 0;
  std::uint64_t hi = 1;
  while (!holds(hi)) {
    lo = hi;
    require(hi < cap, "kappa_bar: conditions not met below the search cap");
    hi = std::min(hi * 2, cap);
  }
  while (hi - lo > 1) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    (holds(mid) ? hi : lo) = mid;
  }
  return hi;
}

struct BoundTerms {
  double b1 = 0.0;  // disagreement from the network average
  double b2 = 0.0;  // average vs G_k minimizer
  double b3 = 0.0;  // G_k minimizer vs optimum

  double total() const noexcept { return b1 + b2 + b3; }
};

/// Exact right-hand sides for general stepsizes, with
/// P_tk = prod_{j=t+1}^{k-1} (1 - mu eta_j) accumulated backwards from t = k-1.
inline BoundTerms theorem1_bounds(const TheoryConstants& c, const StepsizeSchedule& s, std::uint64_t kbar, std::uint64_t k) {
  require(k >= kbar, "theorem1_bounds: need k >= kappa_bar");
  for (std::uint64_t t = kbar; t <= k; ++t) {
    const auto r = check_conditions(c, s, t);
    require(r.c1 && r.c2 && r.c3, "theorem1_bounds: stepsize conditions violated at k = " + std::to_string(t));
  }
  const double scale = c.grad_star * c.smoothness / (c.mu * c.rho2);
  double product = 1.0;
  double noise = 0.0;
  double tracking = 0.0;
  for (std::uint64_t t = k; t-- > kbar;) {
    const Stepsizes now = stepsizes(s, t);
    const Stepsizes next = stepsizes(s, t + 1);
    const double ratio = now.eta / now.gamma;
    noise += product * product * (now.gamma * now.gamma * c.sigma1 + now.eta * now.eta * c.sigma2);
    tracking += product * (1.0 + c.smoothness * c.smoothness / (c.mu * c.rho2) * ratio) * (ratio - next.eta / next.gamma);
    product *= 1.0 - c.mu * now.eta;
  }
  const Stepsizes at_k = stepsizes(s, k);
  return {std::sqrt(noise), c.diameter * product + scale * tracking, scale * at_k.eta / at_k.gamma};
}

/// Closed forms for gamma_k = gamma0 (1+delta k)^{-3/4}, eta_k = eta0 (1+delta k)^{-1}.
inline BoundTerms theorem2_bounds(const TheoryConstants& c, double eta0, double gamma0, double delta, std::uint64_t kbar, std::uint64_t k) {
  require(delta >= 0.0 && delta <= 0.8 * c.mu * eta0 * (1.0 + 1e-12), "theorem2_bounds: need delta <= 0.8 mu eta0");
  require(k >= kbar, "theorem2_bounds: need k >= kappa_bar");
  const double e = std::numbers::e;
  const double decay = std::pow(1.0 + delta * static_cast<double>(k), -0.25);
  const double scale = c.grad_star * c.smoothness / (c.mu * c.rho2);
  const double ratio0 = eta0 / gamma0;
  BoundTerms b;
  b.b1 = std::sqrt(5.0) * e / (2.0 * std::sqrt(c.mu)) *
         (gamma0 / std::sqrt(eta0) * std::sqrt(c.sigma1) + std::sqrt(eta0 * c.sigma2) * decay) * decay;
  const double elapsed = delta * static_cast<double>(k - kbar) / (1.0 + delta * static_cast<double>(kbar));
  b.b2 = c.diameter * std::pow(1.0 + elapsed, -1.25) +
         scale * e / 4.0 * ratio0 * (1.0 + c.smoothness * c.smoothness / (c.mu * c.rho2) * ratio0 * decay) * decay;
  b.b3 = scale * ratio0 * decay;
  return b;
}

/// G(W) = sum_i f_i(w_i) + (gamma / (2 eta)) sum_{i,j} l_ij w_i^T w_j, evaluated blockwise.
inline double lyapunov_value(std::span<const ModelVector> states, const Matrix& laplacian, double eta, double gamma, const LocalObjectives& f) {
  const int n = static_cast<int>(states.size());
  require(laplacian.rows() == n && laplacian.cols() == n && f.nodes() == n, "lyapunov_value: shape mismatch");
  double value = 0.0;
  for (int i = 0; i < n; ++i) value += f.value(i, states[static_cast<std::size_t>(i)]);
  if (gamma == 0.0) return value;
  double quad = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (laplacian(i, j) != 0.0) quad += laplacian(i, j) * states[static_cast<std::size_t>(i)].dot(states[static_cast<std::size_t>(j)]);
  return value + gamma / (2.0 * eta) * quad;
}

struct NoiseSample {
  std::vector<Vector> consensus;  // d~_i - d_i
  std::vector<Vector> gradient;   // g_i - grad f_i(w_i)
};

inline NoiseSample measure_noise(const IterationResult& result, std::span<const ModelVector> states, const Matrix& gains,
                                 const LocalObjectives& f) {
  NoiseSample out;
  for (int i = 0; i < static_cast<int>(states.size()); ++i) {
    const auto& node = result.nodes[static_cast<std::size_t>(i)];
    out.consensus.push_back(node.disagreement - exact_disagreement(i, states, gains));
    out.gradient.push_back(node.gradient - f.gradient(i, states[static_cast<std::size_t>(i)]));
  }
  return out;
}

}  // namespace ncota
