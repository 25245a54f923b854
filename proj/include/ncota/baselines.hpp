#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "ncota/channel.hpp"
#include "ncota/codec.hpp"
#include "ncota/core.hpp"
#include "ncota/frame.hpp"
#include "ncota/optimizer.hpp"
#include "ncota/problems.hpp"
#include "ncota/random.hpp"

namespace ncota {

struct QuantizedPayload {
  std::int64_t bits = 0;
  Vector value;
};

/// Low-precision quantizer: w / ||w||_inf rounded stochastically onto the
/// 2^b-level uniform grid over [-1, 1], plus a 64-bit magnitude header.
inline QuantizedPayload lpq_quantize(const ModelVector& w, int bits, Stream& stream) {
  require(bits >= 1 && bits <= 52, "lpq_quantize: bits per entry must lie in 1..52");
  QuantizedPayload out;
  out.bits = 64 + static_cast<std::int64_t>(bits) * w.size();
  const double scale = w.lpNorm<Eigen::Infinity>();
  out.value = Vector::Zero(w.size());
  if (scale == 0.0) return out;
  const double cells = std::ldexp(1.0, bits) - 1.0;
  const double step = 2.0 / cells;
  for (Index m = 0; m < w.size(); ++m) {
    const double pos = std::clamp((w[m] / scale + 1.0) / step, 0.0, cells);
    double cell = std::floor(pos);
    if (cell >= cells) cell = cells - 1.0;
    const double up = pos - cell;
    const double level = stream.uniform() < up ? cell + 1.0 : cell;
    out.value[m] = scale * (level * step - 1.0);
  }
  return out;
}

inline std::int64_t vq_payload_bits(Index dim, int repetitions) {
  int index_bits = 0;
  while ((std::int64_t{1} << index_bits) < 2 * dim) ++index_bits;
  return static_cast<std::int64_t>(repetitions) * index_bits;
}

/// Cross-polytope vector quantization: REP i.i.d. draws among the 2d axis
/// codewords with the zero-codeword mass moved onto the axes.
inline QuantizedPayload vq_quantize(const ModelVector& w, int repetitions, const Codebook& cb, Stream& stream) {
  require(repetitions >= 1, "vq_quantize: repetitions must be positive");
  const EnergyProfile p = encode_cp(w, max_admissible_phi(w, cb), cb);
  const auto weights = p.weights();
  std::discrete_distribution<int> pick(weights.begin(), weights.end() - 1);
  std::vector<double> counts(weights.size(), 0.0);
  for (int r = 0; r < repetitions; ++r) counts[static_cast<std::size_t>(pick(stream))] += 1.0 / repetitions;
  return {vq_payload_bits(cb.dim, repetitions), weighted_codeword_sum(counts, cb)};
}

/// Decoding succeeds iff B < sum_s log2(1 + (E/N0)(SC/|S|)|h_s|^2).
inline bool outage_free(std::int64_t bits, std::span<const Complex> gains, double energy, double noise, int subcarriers) {
  require(!gains.empty(), "outage: empty subcarrier set");
  if (bits <= 0) return true;
  const double boost = static_cast<double>(subcarriers) / static_cast<double>(gains.size());
  double capacity = 0.0;
  for (const auto& h : gains) {
    const double g = std::norm(h);
    if (g == 0.0) continue;
    if (noise == 0.0) return true;
    capacity += std::log2(1.0 + energy / noise * boost * g);
  }
  return static_cast<double>(bits) < capacity;
}

// ---------------------------------------------------------------------------
// Quantized DGD over OFDMA.

enum class QuantizerKind { lpq, vq, exact };

/// Round-robin OFDMA grid: SC / SC_n nodes per OFDM symbol, node j on block
/// (j mod per_symbol) of symbol floor(j / per_symbol).
struct OfdmaPlan {
  FramePlan grid;
  int block = 1;  // SC_n
  int per_symbol = 1;

  std::vector<int> units(int node) const {
    std::vector<int> out(static_cast<std::size_t>(block));
    const int base = (node / per_symbol) * grid.subcarriers + (node % per_symbol) * block;
    for (int s = 0; s < block; ++s) out[static_cast<std::size_t>(s)] = base + s;
    return out;
  }
};

inline OfdmaPlan make_ofdma_plan(int nodes, int subcarriers, int cyclic_prefix, int block) {
  require(block >= 1 && block <= subcarriers && subcarriers % block == 0, "OFDMA: SC_n must divide SC");
  OfdmaPlan p;
  p.block = block;
  p.per_symbol = subcarriers / block;
  const int symbols = (nodes + p.per_symbol - 1) / p.per_symbol;
  p.grid = make_frame_plan(symbols, subcarriers, cyclic_prefix, 1);
  return p;
}

/// T = N (SC_n / SC) T_ofdm.
inline double ofdma_frame_duration(int nodes, int subcarriers, int cyclic_prefix, int block, double bandwidth_hz) {
  require(bandwidth_hz > 0.0, "frame duration: bandwidth must be positive");
  return static_cast<double>(nodes) * block / subcarriers * (subcarriers + cyclic_prefix) / bandwidth_hz;
}

struct QdgdConfig {
  const LocalObjectives* problem = nullptr;
  ParamDomain domain;
  Codebook codebook;  // VQ only
  QuantizerKind quantizer = QuantizerKind::lpq;
  int bits = 8;
  int repetitions = 10;
  OfdmaPlan ofdma;
  ChannelSpec channel;
  double energy = 1.0;
  double noise = 0.0;
  double eta = 0.1;
  double gamma = 0.1;
  int batch = 0;
};

struct QdgdResult {
  std::vector<ModelVector> states;
  std::vector<int> received;  // N_rx,i
};

inline QuantizedPayload quantize(const QdgdConfig& cfg, const ModelVector& w, Stream& stream) {
  switch (cfg.quantizer) {
    case QuantizerKind::lpq: return lpq_quantize(w, cfg.bits, stream);
    case QuantizerKind::vq: return vq_quantize(w, cfg.repetitions, cfg.codebook, stream);
    case QuantizerKind::exact: return {64 * static_cast<std::int64_t>(w.size()), w};
  }
  return {};
}

inline QdgdResult qdgd_iterate(std::span<const ModelVector> states, const QdgdConfig& cfg, std::uint64_t k, SeedSpec seed) {
  const LocalObjectives& f = *cfg.problem;
  const int n = f.nodes();
  require(static_cast<int>(states.size()) == n, "qdgd_iterate: wrong number of states");
  std::vector<QuantizedPayload> payloads;
  payloads.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    Stream s = seed.stream(k, static_cast<std::uint64_t>(j), Purpose::quantizer);
    payloads.push_back(quantize(cfg, states[static_cast<std::size_t>(j)], s));
  }
  const ChannelRealization channel = draw_realization(cfg.channel, k, cfg.ofdma.grid, seed);
  QdgdResult out;
  out.received.assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const ModelVector& w = states[static_cast<std::size_t>(i)];
    Vector sum = Vector::Zero(f.dim());
    int received = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const CVector h = channel.gains(i, j);
      std::vector<Complex> on_block;
      for (int q : cfg.ofdma.units(j)) on_block.push_back(h[q]);
      if (!outage_free(payloads[static_cast<std::size_t>(j)].bits, on_block, cfg.energy, cfg.noise, cfg.ofdma.grid.subcarriers)) continue;
      sum += payloads[static_cast<std::size_t>(j)].value - w;
      ++received;
    }
    out.received[static_cast<std::size_t>(i)] = received;
    const Vector d = received > 0 ? Vector(sum / received) : Vector(Vector::Zero(f.dim()));
    Stream gs = seed.stream(k, static_cast<std::uint64_t>(i), Purpose::minibatch);
    const Vector g = local_gradient(f, i, w, cfg.batch, gs);
    out.states.push_back(project(w + cfg.gamma * d - cfg.eta * g, cfg.domain));
  }
  return out;
}

/// w_i <- Pi[w_i - eta g_i], no communication.
inline std::vector<ModelVector> local_only_iterate(std::span<const ModelVector> states, const LocalObjectives& f, const ParamDomain& domain,
                                                   double eta, int batch, std::uint64_t k, SeedSpec seed) {
  std::vector<ModelVector> next;
  next.reserve(states.size());
  for (int i = 0; i < static_cast<int>(states.size()); ++i) {
    Stream gs = seed.stream(k, static_cast<std::uint64_t>(i), Purpose::minibatch);
    next.push_back(project(states[static_cast<std::size_t>(i)] - eta * local_gradient(f, i, states[static_cast<std::size_t>(i)], batch, gs), domain));
  }
  return next;
}

}  // namespace ncota
