#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ncota/channel.hpp"
#include "ncota/core.hpp"
#include "ncota/random.hpp"

namespace ncota {

/// The N local objectives f_i, each an average of per-sample losses.
class LocalObjectives {
 public:
  virtual ~LocalObjectives() = default;

  virtual int nodes() const = 0;
  virtual Index dim() const = 0;
  virtual double mu() const = 0;
  virtual double smoothness() const = 0;
  virtual int sample_count(int node) const = 0;
  virtual double value(int node, const ModelVector& w) const = 0;
  virtual Vector sample_gradient(int node, int sample, const ModelVector& w) const = 0;

  virtual Vector gradient(int node, const ModelVector& w) const {
    const int n = sample_count(node);
    Vector g = Vector::Zero(dim());
    for (int s = 0; s < n; ++s) g += sample_gradient(node, s, w);
    return g / n;
  }

  /// F(w) = (1/N) sum_i f_i(w)
  double global_value(const ModelVector& w) const {
    double sum = 0.0;
    for (int i = 0; i < nodes(); ++i) sum += value(i, w);
    return sum / nodes();
  }

  Vector global_gradient(const ModelVector& w) const {
    Vector g = Vector::Zero(dim());
    for (int i = 0; i < nodes(); ++i) g += gradient(i, w);
    return g / nodes();
  }
};

/// Average of B per-sample gradients drawn uniformly without replacement.
inline Vector minibatch_gradient(const LocalObjectives& f, int node, const ModelVector& w, int batch, Stream& stream) {
  const int n = f.sample_count(node);
  require(batch >= 1 && batch <= n, "minibatch_gradient: batch size out of range");
  if (batch == n) return f.gradient(node, w);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Vector g = Vector::Zero(f.dim());
  for (int b = 0; b < batch; ++b) {
    const auto pick = b + static_cast<int>(stream.below(static_cast<std::uint64_t>(n - b)));
    std::swap(order[static_cast<std::size_t>(b)], order[static_cast<std::size_t>(pick)]);
    g += f.sample_gradient(node, order[static_cast<std::size_t>(b)], w);
  }
  return g / batch;
}

/// Minibatch-variance bound ((D - B) / (B (D - 1))) (grad_star + L dm)^2.
inline double sigma2_bound(int samples, int batch, double grad_star, double smoothness, double diameter) {
  require(samples >= 2, "sigma2_bound: need at least two samples per node");
  require(batch >= 1 && batch <= samples, "sigma2_bound: batch size out of range");
  const double spread = grad_star + smoothness * diameter;
  return static_cast<double>(samples - batch) / (static_cast<double>(batch) * (samples - 1)) * spread * spread;
}

/// min{floor(T / T_gr), D}, never below one sample.
inline int minibatch_size(double frame_s, double grad_time_s, int samples) {
  require(frame_s > 0.0 && grad_time_s > 0.0, "minibatch_size: durations must be positive");
  const double fit = std::floor(frame_s / grad_time_s + 1e-9);
  const int capped = fit >= static_cast<double>(samples) ? samples : static_cast<int>(fit);
  return std::max(1, capped);
}

/// ||grad F(0)|| / mu; zero signals a degenerate problem.
inline double compute_radius(const LocalObjectives& f) {
  return f.global_gradient(ModelVector::Zero(f.dim())).norm() / f.mu();
}

// ---------------------------------------------------------------------------
// Linear regression, f_i(w) = 1/2 ||y_i - A_i w||^2

/// Value and gradient A^T (A w - y).
inline std::pair<double, Vector> linreg_objective(const Matrix& A, const Vector& y, const ModelVector& w) {
  require(A.rows() == y.size() && A.cols() == w.size(), "linreg_objective: shape mismatch");
  const Vector residual = A * w - y;
  return {0.5 * residual.squaredNorm(), A.transpose() * residual};
}

class LinearRegression final : public LocalObjectives {
 public:
  struct Node {
    Matrix A;
    Vector y;
  };

  LinearRegression(std::vector<Node> nodes, double mu, double smoothness)
      : nodes_(std::move(nodes)), mu_(mu), smoothness_(smoothness) {
    require(!nodes_.empty(), "LinearRegression: no nodes");
    for (const auto& n : nodes_)
      require(n.A.cols() == nodes_.front().A.cols() && n.A.rows() == n.y.size() && n.A.rows() >= 1, "LinearRegression: shape mismatch");
    require(mu > 0.0 && smoothness >= mu, "LinearRegression: need 0 < mu <= L");
  }

  int nodes() const override { return static_cast<int>(nodes_.size()); }
  Index dim() const override { return nodes_.front().A.cols(); }
  double mu() const override { return mu_; }
  double smoothness() const override { return smoothness_; }
  int sample_count(int node) const override { return static_cast<int>(at(node).A.rows()); }
  const Node& at(int node) const { return nodes_[static_cast<std::size_t>(node)]; }

  double value(int node, const ModelVector& w) const override { return linreg_objective(at(node).A, at(node).y, w).first; }
  Vector gradient(int node, const ModelVector& w) const override { return linreg_objective(at(node).A, at(node).y, w).second; }

  // f_i is the mean of n * 1/2 (a_s^T w - y_s)^2 over its n rows.
  Vector sample_gradient(int node, int sample, const ModelVector& w) const override {
    const auto& n = at(node);
    const auto row = n.A.row(sample);
    return static_cast<double>(n.A.rows()) * (row.dot(w) - n.y[sample]) * row.transpose();
  }

  /// argmin F via the normal equations.
  ModelVector closed_form_minimizer() const {
    Matrix H = Matrix::Zero(dim(), dim());
    Vector b = Vector::Zero(dim());
    for (const auto& n : nodes_) {
      H += n.A.transpose() * n.A;
      b += n.A.transpose() * n.y;
    }
    return H.ldlt().solve(b);
  }

 private:
  std::vector<Node> nodes_;
  double mu_;
  double smoothness_;
};

struct LinregSpec {
  int nodes = 10;
  Index dim = 5;
  double mu = 1.0;
  double smoothness = 3.0;
  double heterogeneity = 0.05;  // spread of local optima around the common one
  double noise = 0.0;
};

/// Each A_i = diag(sqrt(lambda)) V_i^T with V_i a random rotation and lambda
/// spanning [mu, L] (endpoints included), so every f_i is exactly mu-strongly
/// convex and L-smooth.
inline LinearRegression make_synthetic_linreg(const LinregSpec& spec, Stream& stream) {
  require(spec.nodes >= 1 && spec.dim >= 1, "make_synthetic_linreg: invalid size");
  const Index d = spec.dim;
  Vector common(d);
  for (auto& v : common) v = stream.normal();
  common.normalize();
  std::vector<LinearRegression::Node> nodes;
  for (int i = 0; i < spec.nodes; ++i) {
    Matrix G(d, d);
    for (Index r = 0; r < d; ++r)
      for (Index c = 0; c < d; ++c) G(r, c) = stream.normal();
    const Matrix V = Eigen::HouseholderQR<Matrix>(G).householderQ();
    Vector lambda(d);
    for (Index k = 0; k < d; ++k) lambda[k] = spec.mu + (spec.smoothness - spec.mu) * stream.uniform();
    lambda[0] = spec.mu;
    if (d > 1) lambda[1] = spec.smoothness;
    LinearRegression::Node node;
    node.A = lambda.cwiseSqrt().asDiagonal() * V.transpose();
    Vector local(d);
    for (auto& v : local) v = stream.normal();
    local = common + spec.heterogeneity * local;
    node.y = node.A * local;
    for (auto& v : node.y) v += spec.noise * stream.normal();
    nodes.push_back(std::move(node));
  }
  const double smooth = d > 1 ? spec.smoothness : spec.mu;
  return LinearRegression(std::move(nodes), spec.mu, smooth);
}

// ---------------------------------------------------------------------------
// Regularized multinomial cross-entropy over 10 classes with 50-dim features.
// Parameters stack the class-1..9 weight blocks; class 0 is pinned at zero.

inline constexpr int kClasses = 10;
inline constexpr int kFeatureDim = 50;
inline constexpr Index kCeDim = (kClasses - 1) * kFeatureDim;

struct LabeledDataset {
  std::vector<Vector> features;
  std::vector<int> labels;

  int size() const noexcept { return static_cast<int>(labels.size()); }
};

namespace detail {
inline Vector class_logits(const Vector& f, const ModelVector& w) {
  require(f.size() == kFeatureDim, "cross-entropy: feature must have 50 entries");
  require(w.size() == kCeDim, "cross-entropy: parameter must have 450 entries");
  Vector z(kClasses);
  z[0] = 0.0;
  for (int c = 1; c < kClasses; ++c) z[c] = w.segment((c - 1) * kFeatureDim, kFeatureDim).dot(f);
  return z;
}
}  // namespace detail

inline double ce_loss(int label, const Vector& f, const ModelVector& w, double mu) {
  require(label >= 0 && label < kClasses, "ce_loss: label out of range");
  const Vector z = detail::class_logits(f, w);
  const double top = z.maxCoeff();
  const double lse = top + std::log((z.array() - top).exp().sum());
  return 0.5 * mu * w.squaredNorm() - z[label] + lse;
}

inline Vector ce_gradient(int label, const Vector& f, const ModelVector& w, double mu) {
  require(label >= 0 && label < kClasses, "ce_gradient: label out of range");
  const Vector z = detail::class_logits(f, w);
  const Vector e = (z.array() - z.maxCoeff()).exp();
  const Vector s = e / e.sum();
  Vector g = mu * w;
  for (int c = 1; c < kClasses; ++c) g.segment((c - 1) * kFeatureDim, kFeatureDim) += (s[c] - (c == label ? 1.0 : 0.0)) * f;
  return g;
}

/// argmax_c w^(c)T f with w^(0) = 0; ties go to the lowest class index.
inline int predict_class(const Vector& f, const ModelVector& w) {
  const Vector z = detail::class_logits(f, w);
  int best = 0;
  for (int c = 1; c < kClasses; ++c)
    if (z[c] > z[best]) best = c;
  return best;
}

class CrossEntropy final : public LocalObjectives {
 public:
  CrossEntropy(std::shared_ptr<const LabeledDataset> data, std::vector<std::vector<int>> assignment, double mu)
      : data_(std::move(data)), assignment_(std::move(assignment)), mu_(mu) {
    require(mu > 0.0, "CrossEntropy: mu must be positive");
    require(!assignment_.empty(), "CrossEntropy: no nodes");
    for (const auto& local : assignment_) {
      require(!local.empty(), "CrossEntropy: node with an empty local dataset");
      for (int s : local) require(s >= 0 && s < data_->size(), "CrossEntropy: sample index out of range");
    }
  }

  int nodes() const override { return static_cast<int>(assignment_.size()); }
  Index dim() const override { return kCeDim; }
  double mu() const override { return mu_; }
  double smoothness() const override { return mu_ + 2.0; }
  int sample_count(int node) const override { return static_cast<int>(local(node).size()); }

  double value(int node, const ModelVector& w) const override {
    double sum = 0.0;
    for (int s : local(node)) sum += ce_loss(label(s), feature(s), w, mu_);
    return sum / sample_count(node);
  }

  Vector sample_gradient(int node, int sample, const ModelVector& w) const override {
    const int s = local(node)[static_cast<std::size_t>(sample)];
    return ce_gradient(label(s), feature(s), w, mu_);
  }

  const LabeledDataset& dataset() const { return *data_; }
  const std::vector<int>& local(int node) const { return assignment_[static_cast<std::size_t>(node)]; }

 private:
  int label(int s) const { return data_->labels[static_cast<std::size_t>(s)]; }
  const Vector& feature(int s) const { return data_->features[static_cast<std::size_t>(s)]; }

  std::shared_ptr<const LabeledDataset> data_;
  std::vector<std::vector<int>> assignment_;
  double mu_;
};

/// Ten Gaussian class clusters around random unit-norm means; every feature
/// is normalized to unit norm.
inline LabeledDataset make_synthetic_classification(int per_class, double spread, Stream& means_stream, Stream& sample_stream) {
  require(per_class >= 1, "make_synthetic_classification: need samples");
  std::vector<Vector> means;
  for (int c = 0; c < kClasses; ++c) {
    Vector m(kFeatureDim);
    for (auto& v : m) v = means_stream.normal();
    means.push_back(m.normalized());
  }
  LabeledDataset data;
  for (int c = 0; c < kClasses; ++c)
    for (int s = 0; s < per_class; ++s) {
      Vector f(kFeatureDim);
      for (auto& v : f) v = sample_stream.normal();
      f = means[static_cast<std::size_t>(c)] + spread / std::sqrt(static_cast<double>(kFeatureDim)) * f;
      data.features.push_back(f.normalized());
      data.labels.push_back(c);
    }
  return data;
}

/// Feature file: one record per line, "label, f_1, ..., f_50". Features are
/// normalized to unit norm on ingest.
inline LabeledDataset load_features(std::istream& in) {
  LabeledDataset data;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> values;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw Error("feature file line " + std::to_string(line_no) + ": malformed number '" + cell + "'");
      }
    }
    if (values.size() != static_cast<std::size_t>(kFeatureDim + 1))
      throw Error("feature file line " + std::to_string(line_no) + ": expected label plus 50 values, got " + std::to_string(values.size()) + " fields");
    const double label = values[0];
    if (label != std::floor(label) || label < 0 || label >= kClasses)
      throw Error("feature file line " + std::to_string(line_no) + ": label must be an integer in 0..9");
    Vector f = Eigen::Map<const Vector>(values.data() + 1, kFeatureDim);
    if (f.norm() == 0.0) throw Error("feature file line " + std::to_string(line_no) + ": zero feature vector");
    data.features.push_back(f.normalized());
    data.labels.push_back(static_cast<int>(label));
  }
  return data;
}

enum class LabelLayout { iid, spatial };

/// One class per node. iid: balanced labels (i mod 10) shuffled across nodes.
/// spatial: nodes sorted by angle and cut into 10 consecutive sectors of
/// near-equal size, sector s carrying label s.
inline std::vector<int> deploy_labels(int nodes, const Deployment* deployment, LabelLayout layout, Stream& stream) {
  require(nodes >= 1, "deploy_labels: need nodes");
  std::vector<int> labels(static_cast<std::size_t>(nodes));
  if (layout == LabelLayout::iid) {
    for (int i = 0; i < nodes; ++i) labels[static_cast<std::size_t>(i)] = i % kClasses;
    for (int i = nodes - 1; i > 0; --i) std::swap(labels[static_cast<std::size_t>(i)], labels[stream.below(static_cast<std::uint64_t>(i + 1))]);
    return labels;
  }
  require(deployment != nullptr && deployment->size() == nodes, "deploy_labels: spatial layout needs the node positions");
  std::vector<int> order(static_cast<std::size_t>(nodes));
  std::iota(order.begin(), order.end(), 0);
  auto angle = [&](int i) {
    const Point p = deployment->nodes[static_cast<std::size_t>(i)];
    return std::atan2(p.y, p.x);
  };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return angle(a) < angle(b); });
  const int groups = std::min(nodes, kClasses);
  int pos = 0;
  for (int s = 0; s < groups; ++s) {
    const int count = nodes / groups + (s < nodes % groups ? 1 : 0);
    for (int c = 0; c < count; ++c) labels[static_cast<std::size_t>(order[static_cast<std::size_t>(pos++)])] = s;
  }
  return labels;
}

/// Splits each class's samples round-robin among the nodes carrying that label.
inline std::vector<std::vector<int>> assign_samples(const LabeledDataset& data, const std::vector<int>& node_labels) {
  std::vector<std::vector<int>> holders(kClasses);
  for (int i = 0; i < static_cast<int>(node_labels.size()); ++i) holders[static_cast<std::size_t>(node_labels[static_cast<std::size_t>(i)])].push_back(i);
  std::vector<std::vector<int>> local(node_labels.size());
  std::vector<int> next(kClasses, 0);
  for (int s = 0; s < data.size(); ++s) {
    const auto c = static_cast<std::size_t>(data.labels[static_cast<std::size_t>(s)]);
    if (holders[c].empty()) continue;
    const int node = holders[c][static_cast<std::size_t>(next[c]++ % static_cast<int>(holders[c].size()))];
    local[static_cast<std::size_t>(node)].push_back(s);
  }
  for (std::size_t i = 0; i < local.size(); ++i)
    if (local[i].empty()) throw Error("assign_samples: class " + std::to_string(node_labels[i]) + " has no samples for node " + std::to_string(i));
  return local;
}

}  // namespace ncota
