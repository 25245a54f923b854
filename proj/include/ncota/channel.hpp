#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "ncota/core.hpp"
#include "ncota/frame.hpp"
#include "ncota/random.hpp"

namespace ncota {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;

inline constexpr double kSpeedOfLight = 299792458.0;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(Point a, Point b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

/// Node and reflector positions in a disc centered at the origin (meters).
struct Deployment {
  std::vector<Point> nodes;
  std::array<Point, 3> reflectors{};
  double radius = 0.0;

  int size() const noexcept { return static_cast<int>(nodes.size()); }
};

inline Point uniform_in_disc(double radius, Stream& stream) {
  const double rho = radius * std::sqrt(stream.uniform());
  const double angle = stream.phase();
  return {rho * std::cos(angle), rho * std::sin(angle)};
}

inline Deployment deploy_uniform_disc(int nodes, double radius, Stream& stream) {
  require(nodes >= 2, "deploy_uniform_disc: need at least two nodes");
  require(radius > 0.0, "deploy_uniform_disc: radius must be positive");
  Deployment dep;
  dep.radius = radius;
  dep.nodes.reserve(static_cast<std::size_t>(nodes));
  for (int i = 0; i < nodes; ++i) dep.nodes.push_back(uniform_in_disc(radius, stream));
  for (auto& r : dep.reflectors) r = uniform_in_disc(radius, stream);
  return dep;
}

// Plain-text table: one "index x y" row per node, then "R1".."R3" rows for the
// reflectors. Lines starting with '#' are comments.
inline void write_deployment(std::ostream& out, const Deployment& dep) {
  out.precision(17);
  out << "# radius " << dep.radius << "\n# index x_m y_m\n";
  for (int i = 0; i < dep.size(); ++i) out << i << ' ' << dep.nodes[static_cast<std::size_t>(i)].x << ' ' << dep.nodes[static_cast<std::size_t>(i)].y << '\n';
  for (std::size_t r = 0; r < dep.reflectors.size(); ++r)
    out << 'R' << (r + 1) << ' ' << dep.reflectors[r].x << ' ' << dep.reflectors[r].y << '\n';
}

inline Deployment read_deployment(std::istream& in, double radius) {
  Deployment dep;
  dep.radius = radius;
  std::array<bool, 3> seen{};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string tag;
    Point p;
    if (!(row >> tag >> p.x >> p.y)) throw Error("deployment line " + std::to_string(line_no) + ": expected 'index x y'");
    if (tag.size() == 2 && tag[0] == 'R' && tag[1] >= '1' && tag[1] <= '3') {
      const auto r = static_cast<std::size_t>(tag[1] - '1');
      dep.reflectors[r] = p;
      seen[r] = true;
      continue;
    }
    const int index = std::stoi(tag);
    if (index != dep.size()) throw Error("deployment line " + std::to_string(line_no) + ": node indices must be consecutive from 0");
    if (std::hypot(p.x, p.y) > radius * (1.0 + 1e-12)) throw Error("deployment line " + std::to_string(line_no) + ": node outside the disc");
    dep.nodes.push_back(p);
  }
  require(dep.size() >= 2, "deployment: need at least two nodes");
  require(std::all_of(seen.begin(), seen.end(), [](bool s) { return s; }), "deployment: missing reflector rows R1..R3");
  return dep;
}

/// Free-space power gain (c / (4 pi f_c d))^2.
inline double friis_gain(double distance_m, double carrier_hz) {
  require(distance_m > 0.0, "friis_gain: distance must be positive");
  require(carrier_hz > 0.0, "friis_gain: carrier must be positive");
  const double a = kSpeedOfLight / (4.0 * std::numbers::pi * carrier_hz * distance_m);
  return a * a;
}

struct PropagationPath {
  double gain = 0.0;   // power gain alpha
  double delay = 0.0;  // seconds
  Complex fading{1.0, 0.0};
};

/// Frequency response per resource unit: sum_p sqrt(alpha_p) phi_p exp(-j 2 pi tau_p W s / SC)
/// on subcarrier s, repeated across the OFDM symbols of the frame.
inline CVector multipath_response(std::span<const PropagationPath> paths, const FramePlan& plan, double bandwidth_hz) {
  const int sc = plan.subcarriers;
  CVector per_subcarrier = CVector::Zero(sc);
  for (const auto& path : paths) {
    const Complex amplitude = std::sqrt(path.gain) * path.fading;
    const double step = -2.0 * std::numbers::pi * path.delay * bandwidth_hz / sc;
    for (int s = 0; s < sc; ++s) per_subcarrier[s] += amplitude * std::polar(1.0, step * s);
  }
  CVector h(plan.resource_units());
  for (int q = 0; q < h.size(); ++q) h[q] = per_subcarrier[plan.subcarrier_of(q)];
  return h;
}

/// Geometry of the four paths between nodes i and j: direct, then one single
/// bounce per reflector.
inline std::array<PropagationPath, 4> reflector_paths(const Deployment& dep, int i, int j, double carrier_hz) {
  require(i != j, "reflector_channel: transmitter and receiver must differ");
  const Point a = dep.nodes[static_cast<std::size_t>(i)];
  const Point b = dep.nodes[static_cast<std::size_t>(j)];
  std::array<PropagationPath, 4> paths;
  std::array<double, 4> lengths{};
  lengths[0] = distance(a, b);
  for (std::size_t p = 0; p < 3; ++p) lengths[p + 1] = distance(b, dep.reflectors[p]) + distance(dep.reflectors[p], a);
  for (std::size_t p = 0; p < 4; ++p) {
    paths[p].gain = friis_gain(lengths[p], carrier_hz);
    paths[p].delay = lengths[p] / kSpeedOfLight;
  }
  return paths;
}

/// Draws: LOS coefficient of unit magnitude, three reflected CN(0,1) coefficients.
inline CVector reflector_channel(const Deployment& dep, int i, int j, const std::array<Complex, 4>& draws,
                                 const FramePlan& plan, double carrier_hz, double bandwidth_hz) {
  auto paths = reflector_paths(dep, i, j, carrier_hz);
  for (std::size_t p = 0; p < 4; ++p) paths[p].fading = draws[p];
  return multipath_response(paths, plan, bandwidth_hz);
}

enum class Propagation { rayleigh, reflector };
enum class Fading { iid, block, fixed };

struct ChannelSpec {
  Propagation propagation = Propagation::rayleigh;
  Fading fading = Fading::iid;
  double coherence_s = 2e-3;
  double frame_s = 0.0;  // frame duration T, drives block-fading indices
  double carrier_hz = 3e9;
  double bandwidth_hz = 5e6;
  Matrix mean_gains;      // Rayleigh: Lambda_ij
  Deployment deployment;  // reflector model

  int nodes() const {
    return propagation == Propagation::rayleigh ? static_cast<int>(mean_gains.rows()) : deployment.size();
  }

  void validate() const {
    if (propagation == Propagation::rayleigh) {
      require(mean_gains.rows() >= 2 && mean_gains.rows() == mean_gains.cols(), "ChannelSpec: gain matrix must be square, N >= 2");
      require((mean_gains - mean_gains.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * mean_gains.cwiseAbs().maxCoeff(),
              "ChannelSpec: average gains must be reciprocal");
      require(mean_gains.minCoeff() >= 0.0, "ChannelSpec: negative average gain");
    } else {
      require(deployment.size() >= 2, "ChannelSpec: reflector model needs a deployment");
      require(carrier_hz > 0.0 && bandwidth_hz > 0.0, "ChannelSpec: carrier and bandwidth must be positive");
    }
    if (fading == Fading::block) require(coherence_s > 0.0 && frame_s > 0.0, "ChannelSpec: block fading needs coherence time and frame duration");
  }
};

/// Index of the channel realization seen in iteration k. Block boundaries are
/// aligned to t = 0, so a frame never straddles two coherence intervals.
inline std::uint64_t realization_index(const ChannelSpec& spec, std::uint64_t k) {
  switch (spec.fading) {
    case Fading::iid: return k;
    case Fading::fixed: return 0;
    case Fading::block: return static_cast<std::uint64_t>(std::floor(static_cast<double>(k) * spec.frame_s / spec.coherence_s + 1e-9));
  }
  return k;
}

/// One frame's channels. Per-pair samples are generated on demand from the
/// pair's keyed stream, so h_ij == h_ji bit for bit and no N^2 Q buffer is held.
class ChannelRealization {
 public:
  ChannelRealization(const ChannelSpec& spec, const FramePlan& plan, SeedSpec seed, std::uint64_t index)
      : spec_(&spec), plan_(&plan), seed_(seed), index_(index) {}

  int nodes() const { return spec_->nodes(); }
  std::uint64_t index() const noexcept { return index_; }

  CVector operator()(int i, int j) const { return gains(i, j); }

  CVector gains(int i, int j) const {
    require(i != j, "ChannelRealization: no self channel");
    Stream stream = seed_.stream(index_, SeedSpec::pair_key(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)), Purpose::channel);
    if (spec_->propagation == Propagation::rayleigh) {
      const double variance = spec_->mean_gains(i, j);
      CVector h(plan_->resource_units());
      for (auto& v : h) v = stream.complex_normal(variance);
      return h;
    }
    // Always draw in (min, max) orientation; the geometry is symmetric.
    std::array<Complex, 4> draws;
    draws[0] = std::polar(1.0, stream.phase());
    for (std::size_t p = 1; p < 4; ++p) draws[p] = stream.complex_normal(1.0);
    return reflector_channel(spec_->deployment, std::min(i, j), std::max(i, j), draws, *plan_, spec_->carrier_hz,
                             spec_->bandwidth_hz);
  }

 private:
  const ChannelSpec* spec_;
  const FramePlan* plan_;
  SeedSpec seed_;
  std::uint64_t index_;
};

inline ChannelRealization draw_realization(const ChannelSpec& spec, std::uint64_t k, const FramePlan& plan, SeedSpec seed) {
  return ChannelRealization(spec, plan, seed, realization_index(spec, k));
}

/// Per-set sample gains lambda_hat^(m) = (1/R_m) sum_{q in R_m} |h_q|^2.
inline Vector set_gains(const CVector& h, const FramePlan& plan) {
  Vector out(plan.components);
  for (int m = 0; m < plan.components; ++m) {
    double sum = 0.0;
    for (int q : plan.sets[static_cast<std::size_t>(m)]) sum += std::norm(h[q]);
    out[m] = sum / plan.set_size(m);
  }
  return out;
}

/// Average gain of one realization, averaged per set then across sets.
inline double realized_average_gain(const CVector& h, const FramePlan& plan) { return set_gains(h, plan).mean(); }

struct GainLaplacian {
  Matrix gains;      // Lambda, symmetric, zero diagonal
  Matrix laplacian;  // L
  Vector eigenvalues;
  double rho2 = 0.0;
  double rhoN = 0.0;
  double max_degree = 0.0;  // Lambda* = max_i sum_{j != i} Lambda_ij

  int nodes() const { return static_cast<int>(gains.rows()); }
};

/// Symmetrizes the gains, builds L and its spectrum. Throws when the gain
/// graph is disconnected (rho2 <= 1e-10 rhoN).
inline GainLaplacian make_gain_laplacian(const Matrix& raw) {
  require(raw.rows() >= 2 && raw.rows() == raw.cols(), "GainLaplacian: need a square matrix with N >= 2");
  require(raw.allFinite() && raw.minCoeff() >= 0.0, "GainLaplacian: gains must be finite and nonnegative");
  GainLaplacian g;
  g.gains = 0.5 * (raw + raw.transpose());
  g.gains.diagonal().setZero();
  const Index n = g.gains.rows();
  g.laplacian = -g.gains;
  for (Index i = 0; i < n; ++i) g.laplacian(i, i) = g.gains.row(i).sum();
  g.max_degree = g.laplacian.diagonal().maxCoeff();
  Eigen::SelfAdjointEigenSolver<Matrix> solver(g.laplacian, Eigen::EigenvaluesOnly);
  require(solver.info() == Eigen::Success, "GainLaplacian: eigen-decomposition failed");
  g.eigenvalues = solver.eigenvalues();
  g.rho2 = g.eigenvalues[1];
  g.rhoN = g.eigenvalues[n - 1];
  require(g.rhoN > 0.0 && g.rho2 > 1e-10 * g.rhoN, "GainLaplacian: gain graph is disconnected (rho2 ~ 0)");
  return g;
}

/// Monte Carlo estimate of Lambda_ij over `budget` independent realizations.
inline Matrix estimate_average_gains(const ChannelSpec& spec, const FramePlan& plan, SeedSpec seed, int budget) {
  require(budget >= 1, "estimate_average_gains: budget must be positive");
  const int n = spec.nodes();
  Matrix gains = Matrix::Zero(n, n);
  const int draws = spec.fading == Fading::fixed ? 1 : budget;
  for (int b = 0; b < draws; ++b) {
    // Indices well above any iteration count keep these draws apart from the run's own.
    ChannelRealization real(spec, plan, seed, spec.fading == Fading::fixed ? 0 : (std::uint64_t{1} << 62) + static_cast<std::uint64_t>(b));
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) gains(i, j) += realized_average_gain(real.gains(i, j), plan);
  }
  gains /= draws;
  gains.triangularView<Eigen::StrictlyLower>() = gains.transpose();
  return gains;
}

/// Average gains as ground truth: configured values for Rayleigh, sum of path
/// gains for the reflector model (fading coefficients are zero-mean or random
/// phase, so cross terms vanish), and the realized value for static channels.
inline Matrix average_gains(const ChannelSpec& spec, const FramePlan& plan, SeedSpec seed) {
  spec.validate();
  if (spec.fading == Fading::fixed) return estimate_average_gains(spec, plan, seed, 1);
  if (spec.propagation == Propagation::rayleigh) return spec.mean_gains;
  const int n = spec.nodes();
  Matrix gains = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double sum = 0.0;
      for (const auto& p : reflector_paths(spec.deployment, i, j, spec.carrier_hz)) sum += p.gain;
      gains(i, j) = gains(j, i) = sum;
    }
  return gains;
}

/// With budget > 0 and a fading reflector model, Lambda is estimated by Monte
/// Carlo instead of the closed form.
inline GainLaplacian average_gain_laplacian(const ChannelSpec& spec, const FramePlan& plan, SeedSpec seed, int budget = 0) {
  if (budget > 0 && spec.propagation == Propagation::reflector && spec.fading != Fading::fixed)
    return make_gain_laplacian(estimate_average_gains(spec, plan, seed, budget));
  return make_gain_laplacian(average_gains(spec, plan, seed));
}

struct Dispersion {
  double theta = 0.0;  // per-unit power dispersion, normalized by Lambda
  double varpi = 0.0;  // per-set sample-gain dispersion, normalized by Lambda
};

/// For Rayleigh fading with independent units: theta = 1 and
/// varpi = sqrt(mean_m 1/R_m).
inline Dispersion rayleigh_dispersion(const FramePlan& plan) {
  double inv = 0.0;
  for (int m = 0; m < plan.components; ++m) inv += 1.0 / plan.set_size(m);
  return {1.0, std::sqrt(inv / plan.components)};
}

inline Dispersion channel_dispersion(const ChannelSpec& spec, const FramePlan& plan, SeedSpec seed, const Matrix& gains, int budget) {
  if (spec.propagation == Propagation::rayleigh && spec.fading != Fading::fixed) return rayleigh_dispersion(plan);
  require(budget >= 1, "channel_dispersion: budget must be positive");
  const int n = spec.nodes();
  const int draws = spec.fading == Fading::fixed ? 1 : budget;
  Matrix unit_sq = Matrix::Zero(n, n);
  Matrix set_sq = Matrix::Zero(n, n);
  for (int b = 0; b < draws; ++b) {
    ChannelRealization real(spec, plan, seed, spec.fading == Fading::fixed ? 0 : (std::uint64_t{1} << 61) + static_cast<std::uint64_t>(b));
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const double lambda = gains(i, j);
        require(lambda > 0.0, "channel_dispersion: zero average gain");
        const CVector h = real.gains(i, j);
        double u = 0.0;
        for (const auto& v : h) u += (std::norm(v) - lambda) * (std::norm(v) - lambda);
        unit_sq(i, j) += u / static_cast<double>(h.size());
        set_sq(i, j) += (set_gains(h, plan).array() - lambda).square().mean();
      }
  }
  Dispersion out;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      out.theta = std::max(out.theta, std::sqrt(unit_sq(i, j) / draws) / gains(i, j));
      out.varpi = std::max(out.varpi, std::sqrt(set_sq(i, j) / draws) / gains(i, j));
    }
  return out;
}

}  // namespace ncota
