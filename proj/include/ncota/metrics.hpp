#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "ncota/core.hpp"
#include "ncota/problems.hpp"

namespace ncota {

/// Centralized optimum: normal equations for linear regression, otherwise
/// full-gradient descent with stepsize 2/(mu+L) until
/// ||grad F|| <= 1e-10 max(1, ||grad F(0)||).
inline ModelVector compute_wstar(const LocalObjectives& f, std::uint64_t max_iterations = 10'000'000) {
  const ModelVector zero = ModelVector::Zero(f.dim());
  const double tol = 1e-10 * std::max(1.0, f.global_gradient(zero).norm());
  if (const auto* lin = dynamic_cast<const LinearRegression*>(&f)) {
    const ModelVector w = lin->closed_form_minimizer();
    if (f.global_gradient(w).norm() <= tol) return w;
  }
  const double step = 2.0 / (f.mu() + f.smoothness());
  ModelVector w = zero;
  for (std::uint64_t it = 0; it < max_iterations; ++it) {
    const Vector g = f.global_gradient(w);
    if (g.norm() <= tol) return w;
    w -= step * g;
  }
  throw Error("compute_wstar: gradient descent did not converge within the iteration cap");
}

/// sum_i ||w_i - w*||^2 / (N ||w*||^2)
inline double normalized_error(std::span<const ModelVector> states, const ModelVector& wstar) {
  const double scale = wstar.squaredNorm();
  require(scale > 0.0, "normalized_error: w* is zero");
  require(!states.empty(), "normalized_error: no states");
  double sum = 0.0;
  for (const auto& w : states) sum += (w - wstar).squaredNorm();
  return sum / (static_cast<double>(states.size()) * scale);
}

/// F(w_bar) - F(w*) at the network average.
inline double suboptimality_gap(const LocalObjectives& f, std::span<const ModelVector> states, const ModelVector& wstar) {
  return f.global_value(average(states)) - f.global_value(wstar);
}

/// Misclassification rate of the argmax rule (ties to the lowest class).
inline double test_error(const ModelVector& w, const LabeledDataset& test) {
  require(test.size() > 0, "test_error: empty test set");
  int wrong = 0;
  for (int s = 0; s < test.size(); ++s)
    if (predict_class(test.features[static_cast<std::size_t>(s)], w) != test.labels[static_cast<std::size_t>(s)]) ++wrong;
  return static_cast<double>(wrong) / test.size();
}

/// max_i ||grad f_i(w)||
inline double node_gradient_spread(const LocalObjectives& f, const ModelVector& w) {
  double best = 0.0;
  for (int i = 0; i < f.nodes(); ++i) best = std::max(best, f.gradient(i, w).norm());
  return best;
}

/// max over nodes and samples of the per-sample gradient norm at w.
inline double sample_gradient_spread(const LocalObjectives& f, const ModelVector& w) {
  double best = 0.0;
  for (int i = 0; i < f.nodes(); ++i)
    for (int s = 0; s < f.sample_count(i); ++s) best = std::max(best, f.sample_gradient(i, s, w).norm());
  return best;
}

}  // namespace ncota
