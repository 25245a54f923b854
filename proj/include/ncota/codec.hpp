#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "ncota/core.hpp"

namespace ncota {

/// Finite set of codewords whose convex hull contains the parameter ball.
struct Codebook {
  enum class Kind { generic, cross_polytope };

  std::vector<Vector> codewords;
  Index dim = 0;
  double radius = 0.0;
  Kind kind = Kind::generic;

  int size() const noexcept { return static_cast<int>(codewords.size()); }

  double max_pairwise_distance() const {
    if (kind == Kind::cross_polytope) return 2.0 * std::sqrt(static_cast<double>(dim)) * radius;
    double best = 0.0;
    for (std::size_t a = 0; a < codewords.size(); ++a)
      for (std::size_t b = a + 1; b < codewords.size(); ++b)
        best = std::max(best, (codewords[a] - codewords[b]).norm());
    return best;
  }
};

/// Probability vector over codewords; entries are per-component transmit energies.
class EnergyProfile {
 public:
  static constexpr double kSumTolerance = 1e-12;

  EnergyProfile() = default;

  /// Clamps tiny negative entries from cancellation and renormalizes when the
  /// sum drifts by more than kSumTolerance. Anything worse is rejected.
  explicit EnergyProfile(std::vector<double> weights) : weights_(std::move(weights)) {
    require(!weights_.empty(), "EnergyProfile: empty weight vector");
    for (double& w : weights_) {
      require(std::isfinite(w) && w >= -1e-9, "EnergyProfile: negative or non-finite weight");
      if (w < 0.0) w = 0.0;
    }
    const double sum = std::accumulate(weights_.begin(), weights_.end(), 0.0);
    require(std::abs(sum - 1.0) <= 1e-9, "EnergyProfile: weights do not sum to one");
    if (std::abs(sum - 1.0) > kSumTolerance)
      for (double& w : weights_) w /= sum;
  }

  std::span<const double> weights() const noexcept { return weights_; }
  int size() const noexcept { return static_cast<int>(weights_.size()); }
  double operator[](int m) const { return weights_[static_cast<std::size_t>(m)]; }

 private:
  std::vector<double> weights_;
};

/// Cross-polytope codebook: +-sqrt(d)*r along each axis, then the origin.
/// Codeword order: z_m = +sqrt(d) r e_m, z_{d+m} = -sqrt(d) r e_m, z_{2d} = 0 (0-based).
inline Codebook build_cp_codebook(Index d, double r) {
  require(d >= 1, "build_cp_codebook: dimension must be positive");
  require(r > 0.0 && std::isfinite(r), "build_cp_codebook: radius must be positive");
  Codebook cb;
  cb.dim = d;
  cb.radius = r;
  cb.kind = Codebook::Kind::cross_polytope;
  const double scale = std::sqrt(static_cast<double>(d)) * r;
  cb.codewords.reserve(static_cast<std::size_t>(2 * d + 1));
  for (Index m = 0; m < d; ++m) cb.codewords.push_back(scale * Vector::Unit(d, m));
  for (Index m = 0; m < d; ++m) cb.codewords.push_back(-scale * Vector::Unit(d, m));
  cb.codewords.push_back(Vector::Zero(d));
  return cb;
}

/// Largest phi keeping the zero-codeword weight nonnegative.
inline double max_admissible_phi(const ModelVector& w, const Codebook& cb) {
  const double scale = std::sqrt(static_cast<double>(cb.dim)) * cb.radius;
  return std::max(0.0, 1.0 - w.lpNorm<1>() / scale);
}

namespace detail {
inline void check_cp(const ModelVector& w, const Codebook& cb) {
  require(cb.kind == Codebook::Kind::cross_polytope, "encode_cp: codebook is not cross-polytope");
  require(w.size() == cb.dim, "encode_cp: dimension mismatch");
  require(w.norm() <= cb.radius * (1.0 + 1e-12), "encode_cp: state outside the parameter ball");
}

inline EnergyProfile cp_weights(const ModelVector& w, double phi, const Codebook& cb) {
  const Index d = cb.dim;
  const double scale = std::sqrt(static_cast<double>(d)) * cb.radius;
  const double spread = phi / (2.0 * static_cast<double>(d));
  std::vector<double> p(static_cast<std::size_t>(2 * d + 1));
  for (Index m = 0; m < d; ++m) {
    p[static_cast<std::size_t>(m)] = std::max(w[m], 0.0) / scale + spread;
    p[static_cast<std::size_t>(d + m)] = std::max(-w[m], 0.0) / scale + spread;
  }
  p.back() = 1.0 - w.lpNorm<1>() / scale - phi;
  return EnergyProfile(std::move(p));
}
}  // namespace detail

/// Convex-combination weights of w under the CP codebook with mass phi spread
/// evenly over the 2d axis codewords.
inline EnergyProfile encode_cp(const ModelVector& w, double phi, const Codebook& cb) {
  detail::check_cp(w, cb);
  require(phi >= 0.0 && phi <= max_admissible_phi(w, cb) + 1e-12, "encode_cp: phi outside admissible range");
  return detail::cp_weights(w, phi, cb);
}

/// encode_cp with phi clipped to the per-vector admissible maximum.
inline EnergyProfile encode_cp_clipped(const ModelVector& w, double phi, const Codebook& cb) {
  detail::check_cp(w, cb);
  require(phi >= 0.0, "encode_cp: phi must be nonnegative");
  return detail::cp_weights(w, std::min(phi, max_admissible_phi(w, cb)), cb);
}

/// sum_m weights[m] * z_m, for arbitrary real weights.
inline Vector weighted_codeword_sum(std::span<const double> weights, const Codebook& cb) {
  require(static_cast<int>(weights.size()) == cb.size(), "reconstruct: length mismatch");
  if (cb.kind == Codebook::Kind::cross_polytope) {
    const Index d = cb.dim;
    const double scale = std::sqrt(static_cast<double>(d)) * cb.radius;
    Vector out(d);
    for (Index m = 0; m < d; ++m)
      out[m] = scale * (weights[static_cast<std::size_t>(m)] - weights[static_cast<std::size_t>(d + m)]);
    return out;
  }
  Vector out = Vector::Zero(cb.dim);
  for (int m = 0; m < cb.size(); ++m) out += weights[static_cast<std::size_t>(m)] * cb.codewords[static_cast<std::size_t>(m)];
  return out;
}

inline Vector reconstruct(const EnergyProfile& p, const Codebook& cb) {
  return weighted_codeword_sum(p.weights(), cb);
}

}  // namespace ncota
