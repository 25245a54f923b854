#pragma once

#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "ncota/channel.hpp"
#include "ncota/codec.hpp"
#include "ncota/frame.hpp"
#include "ncota/random.hpp"

namespace ncota {

/// Transmit samples: sqrt(E) e^{j theta_q} sqrt(Q / R_{m+shift}) sqrt(p_m) on
/// every unit q of set (m + shift) mod M.
inline CVector tx_signal(const EnergyProfile& p, double energy, const FramePlan& plan, int shift, std::span<const double> phases) {
  const int M = plan.components;
  const int Q = plan.resource_units();
  require(p.size() == M, "tx_signal: profile length does not match the frame plan");
  require(shift >= 0 && shift < M, "tx_signal: shift out of range");
  require(static_cast<int>(phases.size()) == Q, "tx_signal: need one phase per resource unit");
  require(energy > 0.0, "tx_signal: energy per sample must be positive");
  CVector x(Q);
  for (int m = 0; m < M; ++m) {
    const int set = shifted_set(m, shift, M);
    const double amplitude = std::sqrt(energy * Q / plan.set_size(set) * p[m]);
    for (int q : plan.sets[static_cast<std::size_t>(set)]) x[q] = std::polar(amplitude, phases[static_cast<std::size_t>(q)]);
  }
  return x;
}

/// I.i.d. uniform phases in [0, 2 pi), one per resource unit.
inline std::vector<double> draw_phases(int units, Stream& stream) {
  std::vector<double> phases(static_cast<std::size_t>(units));
  for (auto& v : phases) v = stream.phase();
  return phases;
}

/// Common shift for the frame, drawn from the shared stream so every node agrees.
inline int draw_shift(int components, Stream& shared) {
  require(components >= 1, "draw_shift: need at least one component");
  return static_cast<int>(shared.below(static_cast<std::uint64_t>(components)));
}

struct Transmission {
  int node = 0;
  CVector signal;
};

/// y_i = sum_{transmitting j != i} h_ij (.) x_j + n_i with n ~ CN(0, N0 I).
/// `channel(i, j)` returns the Q per-unit gains between i and j.
template <typename ChannelFn>
CVector rx_signal(int receiver, std::span<const Transmission> transmissions, const ChannelFn& channel, int units, double noise,
                  Stream& stream) {
  CVector y = CVector::Zero(units);
  for (const auto& tx : transmissions) {
    if (tx.node == receiver) continue;
    require(tx.signal.size() == units, "rx_signal: transmit signal length mismatch");
    const CVector h = channel(receiver, tx.node);
    y += h.cwiseProduct(tx.signal);
  }
  if (noise > 0.0)
    for (auto& v : y) v += stream.complex_normal(noise);
  return y;
}

/// Non-coherent energy estimates r_m = (1 - chi) sum_{q in R_{m+shift}} (|y_q|^2 - N0) / (p_tx (1 - p_tx) E Q).
/// Not clamped at zero: negative values keep the estimate unbiased.
inline Vector energy_estimates(const CVector& y, bool transmitting, const FramePlan& plan, int shift, double p_tx, double energy,
                               double noise) {
  require(p_tx > 0.0 && p_tx < 1.0, "energy_estimates: p_tx must lie in (0, 1)");
  require(energy > 0.0, "energy_estimates: energy per sample must be positive");
  require(y.size() == plan.resource_units(), "energy_estimates: received signal length mismatch");
  const int M = plan.components;
  Vector r = Vector::Zero(M);
  if (transmitting) return r;
  const double scale = 1.0 / (p_tx * (1.0 - p_tx) * energy * plan.resource_units());
  for (int m = 0; m < M; ++m) {
    double sum = 0.0;
    for (int q : plan.sets[static_cast<std::size_t>(shifted_set(m, shift, M))]) sum += std::norm(y[q]) - noise;
    r[m] = sum * scale;
  }
  return r;
}

/// d_i estimate: sum_m r_m (z_m - w).
inline Vector disagreement(const Vector& r, const Codebook& cb, const ModelVector& w) {
  require(r.size() == cb.size(), "disagreement: estimate length does not match codebook");
  require(w.size() == cb.dim, "disagreement: state dimension mismatch");
  return weighted_codeword_sum(std::span<const double>(r.data(), static_cast<std::size_t>(r.size())), cb) - r.sum() * w;
}

/// Exact disagreement sum_{j != i} Lambda_ij (w_j - w_i).
inline Vector exact_disagreement(int i, std::span<const ModelVector> states, const Matrix& gains) {
  Vector d = Vector::Zero(states[static_cast<std::size_t>(i)].size());
  for (int j = 0; j < static_cast<int>(states.size()); ++j)
    if (j != i) d += gains(i, j) * (states[static_cast<std::size_t>(j)] - states[static_cast<std::size_t>(i)]);
  return d;
}

}  // namespace ncota
