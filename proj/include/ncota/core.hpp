#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ncota {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using ModelVector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised for contract violations anywhere in the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& what) {
  if (!condition) throw Error(what);
}

/// Origin-centered ball {w : ||w|| <= radius} in R^dim.
struct ParamDomain {
  Index dim = 1;
  double radius = 1.0;

  ParamDomain() = default;
  ParamDomain(Index d, double r) : dim(d), radius(r) {
    require(d >= 1, "ParamDomain: dimension must be positive");
    require(r > 0.0 && std::isfinite(r), "ParamDomain: radius must be positive and finite");
  }

  double diameter() const noexcept { return 2.0 * radius; }

  bool contains(const ModelVector& w, double rel_slack = 0.0) const {
    return w.size() == dim && w.norm() <= radius * (1.0 + rel_slack);
  }
};

/// Euclidean projection onto the ball. The scaled branch is nudged inward until
/// the norm is within the radius, which makes the map exactly idempotent.
inline ModelVector project(const Vector& a, const ParamDomain& domain) {
  const double norm = a.norm();
  if (norm <= domain.radius) return a;
  ModelVector out = a * (domain.radius / norm);
  double shrink = 1.0;
  while (out.norm() > domain.radius) {
    shrink = std::nextafter(shrink, 0.0);
    out = a * (domain.radius / norm * shrink);
  }
  return out;
}

/// sqrt(sum_i ||w_i - reference||^2)
inline double stacked_norm(std::span<const ModelVector> states, const ModelVector& reference) {
  double sum = 0.0;
  for (const auto& w : states) {
    require(w.size() == reference.size(), "stacked_norm: dimension mismatch");
    sum += (w - reference).squaredNorm();
  }
  return std::sqrt(sum);
}

inline ModelVector average(std::span<const ModelVector> states) {
  require(!states.empty(), "average: no states");
  ModelVector mean = ModelVector::Zero(states.front().size());
  for (const auto& w : states) mean += w;
  return mean / static_cast<double>(states.size());
}

}  // namespace ncota
