#include <gtest/gtest.h>

#include <memory>
#include <sstream>

#include "ncota/metrics.hpp"
#include "ncota/problems.hpp"

using namespace ncota;

namespace {

Vector unit_feature(Stream& s) {
  Vector f(kFeatureDim);
  for (auto& v : f) v = s.normal();
  return f.normalized();
}

Vector random_vector(Index d, double scale, Stream& s) {
  Vector v(d);
  for (auto& x : v) x = scale * s.normal();
  return v;
}

template <typename F>
Vector central_difference(F&& f, const Vector& w, double h) {
  Vector g(w.size());
  Vector a = w;
  for (Index c = 0; c < w.size(); ++c) {
    a[c] = w[c] + h;
    const double up = f(a);
    a[c] = w[c] - h;
    const double down = f(a);
    a[c] = w[c];
    g[c] = (up - down) / (2.0 * h);
  }
  return g;
}

std::shared_ptr<LabeledDataset> small_dataset(int per_class, std::uint64_t seed) {
  Stream means(seed), samples(seed + 1);
  return std::make_shared<LabeledDataset>(make_synthetic_classification(per_class, 0.5, means, samples));
}

}  // namespace

TEST(CrossEntropy, LossAtOriginIsLogTen) {
  Stream s(1);
  const Vector w = Vector::Zero(kCeDim);
  for (int c = 0; c < kClasses; ++c) EXPECT_NEAR(ce_loss(c, unit_feature(s), w, 0.3), std::log(10.0), 1e-14);
}

TEST(CrossEntropy, LossDecreasesWithCorrectScore) {
  Stream s(2);
  const Vector f = unit_feature(s);
  Vector w = Vector::Zero(kCeDim);
  w.segment(2 * kFeatureDim, kFeatureDim) = 5.0 * f;  // class 3
  EXPECT_LT(ce_loss(3, f, w, 0.0), std::log(10.0));
  EXPECT_GT(ce_loss(4, f, w, 0.0), std::log(10.0));
  EXPECT_EQ(predict_class(f, w), 3);
}

TEST(CrossEntropy, GradientAtOrigin) {
  Stream s(3);
  const Vector f = unit_feature(s);
  const int label = 4;
  const Vector g = ce_gradient(label, f, Vector::Zero(kCeDim), 0.5);
  for (int c = 1; c < kClasses; ++c) {
    const Vector expected = (0.1 - (c == label ? 1.0 : 0.0)) * f;
    EXPECT_LE((g.segment((c - 1) * kFeatureDim, kFeatureDim) - expected).norm(), 1e-15);
  }
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  Stream s(4);
  for (int t = 0; t < 20; ++t) {
    const int label = static_cast<int>(s.below(kClasses));
    const Vector f = unit_feature(s);
    const Vector w = random_vector(kCeDim, 0.3, s);
    const double mu = 0.1;
    const Vector fd = central_difference([&](const Vector& v) { return ce_loss(label, f, v, mu); }, w, 1e-6);
    const Vector g = ce_gradient(label, f, w, mu);
    EXPECT_LE((g - fd).norm() / g.norm(), 1e-5);
  }
}

TEST(CrossEntropy, RegularizerShiftsGradientExactly) {
  Stream s(5);
  const Vector f = unit_feature(s);
  const Vector w = random_vector(kCeDim, 0.2, s);
  EXPECT_LE((ce_gradient(2, f, w, 0.7) - ce_gradient(2, f, w, 0.2) - 0.5 * w).norm(), 1e-14);
}

TEST(CrossEntropy, StableForLargeScores) {
  Stream s(6);
  const Vector f = unit_feature(s);
  const Vector w = random_vector(kCeDim, 1e3, s);
  EXPECT_TRUE(std::isfinite(ce_loss(0, f, w, 0.0)));
  EXPECT_TRUE(ce_gradient(0, f, w, 0.0).allFinite());
}

TEST(CrossEntropy, StrongConvexityAndSmoothness) {
  Stream s(7);
  const double mu = 0.2;
  for (int t = 0; t < 100; ++t) {
    const int label = static_cast<int>(s.below(kClasses));
    const Vector f = unit_feature(s);
    const Vector u = random_vector(kCeDim, 0.5, s);
    const Vector v = random_vector(kCeDim, 0.5, s);
    const double gap = (ce_gradient(label, f, u, mu) - ce_gradient(label, f, v, mu)).norm();
    const double dist = (u - v).norm();
    EXPECT_GE(gap, mu * dist * (1.0 - 1e-12));
    EXPECT_LE(gap, (mu + 2.0) * dist * (1.0 + 1e-12));
  }
}

TEST(CrossEntropy, ObjectiveAggregatesLocalSamples) {
  auto data = small_dataset(4, 10);
  std::vector<std::vector<int>> assignment{{0, 1, 5}, {10, 20, 30, 39}};
  const CrossEntropy ce(data, assignment, 0.1);
  EXPECT_EQ(ce.nodes(), 2);
  EXPECT_EQ(ce.sample_count(1), 4);
  EXPECT_DOUBLE_EQ(ce.smoothness(), 2.1);
  Stream s(11);
  const Vector w = random_vector(kCeDim, 0.1, s);
  double value = 0.0;
  Vector grad = Vector::Zero(kCeDim);
  for (int idx : assignment[1]) {
    const auto u = static_cast<std::size_t>(idx);
    value += ce_loss(data->labels[u], data->features[u], w, 0.1) / 4.0;
    grad += ce_gradient(data->labels[u], data->features[u], w, 0.1) / 4.0;
  }
  EXPECT_NEAR(ce.value(1, w), value, 1e-13);
  EXPECT_LE((ce.gradient(1, w) - grad).norm(), 1e-13);
  EXPECT_THROW(CrossEntropy(data, {{}}, 0.1), Error);
  EXPECT_THROW(CrossEntropy(data, {{1000}}, 0.1), Error);
}

TEST(CrossEntropy, MinimizerInsideComputedRadius) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto data = small_dataset(6, 100 + seed);
    Stream s(seed);
    const auto labels = deploy_labels(10, nullptr, LabelLayout::iid, s);
    const CrossEntropy ce(data, assign_samples(*data, labels), 0.5);
    const ModelVector wstar = compute_wstar(ce);
    EXPECT_LE(wstar.norm(), compute_radius(ce) * (1.0 + 1e-9));
  }
}

TEST(LinearRegression, IdentityObjective) {
  Stream s(12);
  const Vector w = random_vector(4, 1.0, s);
  const auto [value, grad] = linreg_objective(Matrix::Identity(4, 4), Vector::Zero(4), w);
  EXPECT_NEAR(value, 0.5 * w.squaredNorm(), 1e-15);
  EXPECT_EQ(grad, w);
  EXPECT_THROW(linreg_objective(Matrix::Identity(4, 3), Vector::Zero(4), w), Error);
}

TEST(LinearRegression, GradientMatchesFiniteDifferences) {
  Stream s(13);
  const Matrix A = Matrix::Random(6, 4);
  const Vector y = random_vector(6, 1.0, s);
  const Vector w = random_vector(4, 1.0, s);
  const Vector fd = central_difference([&](const Vector& v) { return linreg_objective(A, y, v).first; }, w, 1e-6);
  const Vector g = linreg_objective(A, y, w).second;
  EXPECT_LE((g - fd).norm() / g.norm(), 1e-7);
}

TEST(LinearRegression, ClosedFormZeroesGlobalGradient) {
  Stream s(14);
  LinregSpec spec;
  spec.noise = 0.1;
  const LinearRegression f = make_synthetic_linreg(spec, s);
  const ModelVector w = f.closed_form_minimizer();
  EXPECT_LE(f.global_gradient(w).norm(), 1e-12);
}

TEST(LinearRegression, SyntheticSpectrumMatchesConstants) {
  Stream s(15);
  LinregSpec spec;
  spec.mu = 0.5;
  spec.smoothness = 4.0;
  const LinearRegression f = make_synthetic_linreg(spec, s);
  for (int i = 0; i < f.nodes(); ++i) {
    const Matrix H = f.at(i).A.transpose() * f.at(i).A;
    const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(H).eigenvalues();
    EXPECT_NEAR(ev.minCoeff(), 0.5, 1e-12);
    EXPECT_NEAR(ev.maxCoeff(), 4.0, 1e-12);
  }
}

TEST(LinearRegression, SampleGradientsAverageToGradient) {
  Stream s(16);
  const LinearRegression f = make_synthetic_linreg(LinregSpec{}, s);
  const Vector w = random_vector(5, 0.5, s);
  Vector mean = Vector::Zero(5);
  for (int q = 0; q < f.sample_count(2); ++q) mean += f.sample_gradient(2, q, w);
  mean /= f.sample_count(2);
  EXPECT_LE((mean - f.gradient(2, w)).norm(), 1e-13);
}

TEST(Radius, DegenerateAndScaling) {
  std::vector<LinearRegression::Node> zero(3, {Matrix::Identity(2, 2), Vector::Zero(2)});
  EXPECT_EQ(compute_radius(LinearRegression(zero, 1.0, 1.0)), 0.0);
  std::vector<LinearRegression::Node> nodes(3, {Matrix::Identity(2, 2), Vector::Ones(2)});
  const double r1 = compute_radius(LinearRegression(nodes, 1.0, 1.0));
  const double r2 = compute_radius(LinearRegression(nodes, 0.5, 1.0));
  EXPECT_NEAR(r1, std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(r1 / r2, 0.5, 1e-15);
}

TEST(Minibatch, FullBatchIsExact) {
  Stream s(17);
  const LinearRegression f = make_synthetic_linreg(LinregSpec{}, s);
  const Vector w = random_vector(5, 0.5, s);
  EXPECT_EQ(minibatch_gradient(f, 0, w, f.sample_count(0), s), f.gradient(0, w));
  EXPECT_THROW(minibatch_gradient(f, 0, w, 0, s), Error);
  EXPECT_THROW(minibatch_gradient(f, 0, w, f.sample_count(0) + 1, s), Error);
}

TEST(Minibatch, UnbiasedAndWithinVarianceBound) {
  Stream s(18);
  for (int cfg = 0; cfg < 10; ++cfg) {
    const int D = 4 + static_cast<int>(s.below(8));
    const int B = 1 + static_cast<int>(s.below(static_cast<std::uint64_t>(D - 1)));
    const Matrix A = Matrix::Random(D, 3);
    const Vector y = random_vector(D, 1.0, s);
    std::vector<LinearRegression::Node> nodes{{A, y}};
    const LinearRegression f(nodes, 1e-3, 1e3);
    const double radius = 1.0;
    const Vector w = radius * random_vector(3, 1.0, s).normalized() * s.uniform();
    const Vector exact = f.gradient(0, w);
    const ModelVector wstar = f.closed_form_minimizer();
    double grad_star = 0.0, smooth = 0.0;
    for (int q = 0; q < D; ++q) {
      grad_star = std::max(grad_star, f.sample_gradient(0, q, wstar).norm());
      smooth = std::max(smooth, static_cast<double>(D) * A.row(q).squaredNorm());
    }
    const double dm = 2.0 * std::max(radius, wstar.norm());
    const int draws = 20000;
    Vector sum = Vector::Zero(3);
    Vector sumsq = Vector::Zero(3);
    double second = 0.0;
    for (int t = 0; t < draws; ++t) {
      const Vector g = minibatch_gradient(f, 0, w, B, s);
      sum += g;
      sumsq += g.cwiseAbs2();
      second += (g - exact).squaredNorm();
    }
    const Vector mean = sum / draws;
    const Vector se = ((sumsq / draws - mean.cwiseAbs2()) / draws).cwiseSqrt();
    for (Index c = 0; c < 3; ++c) EXPECT_NEAR(mean[c], exact[c], 4.0 * se[c] + 1e-12);
    EXPECT_LE(second / draws, sigma2_bound(D, B, grad_star, smooth, dm));
  }
}

TEST(Sigma2, Examples) {
  EXPECT_EQ(sigma2_bound(10, 10, 1.0, 2.0, 3.0), 0.0);
  EXPECT_DOUBLE_EQ(sigma2_bound(2, 1, 1.0, 2.0, 3.0), 49.0);
  const double a = sigma2_bound(100000, 10, 1.0, 1.0, 1.0);
  const double b = sigma2_bound(100000, 5, 1.0, 1.0, 1.0);
  EXPECT_NEAR(b / a, 2.0, 1e-3);
  EXPECT_THROW(sigma2_bound(1, 1, 1.0, 1.0, 1.0), Error);
}

TEST(MinibatchSize, Examples) {
  EXPECT_EQ(minibatch_size(258e-6, 30e-6, 5), 5);
  EXPECT_EQ(minibatch_size(258e-6, 30e-6, 100), 8);
  EXPECT_EQ(minibatch_size(10e-6, 30e-6, 100), 1);
  EXPECT_EQ(minibatch_size(258e-6, 30e-6, 1), 1);
  EXPECT_EQ(minibatch_size(90e-6, 30e-6, 100), 3);
}

TEST(Labels, IidIsBalanced) {
  Stream s(19);
  const auto labels = deploy_labels(20, nullptr, LabelLayout::iid, s);
  std::vector<int> count(kClasses, 0);
  for (int l : labels) ++count[static_cast<std::size_t>(l)];
  for (int c : count) EXPECT_EQ(c, 2);
}

TEST(Labels, SpatialSectorsShareLabels) {
  Stream s(20);
  const Deployment dep = deploy_uniform_disc(40, 100.0, s);
  const auto labels = deploy_labels(40, &dep, LabelLayout::spatial, s);
  std::vector<std::pair<double, int>> by_angle;
  for (int i = 0; i < 40; ++i)
    by_angle.emplace_back(std::atan2(dep.nodes[static_cast<std::size_t>(i)].y, dep.nodes[static_cast<std::size_t>(i)].x),
                          labels[static_cast<std::size_t>(i)]);
  std::sort(by_angle.begin(), by_angle.end());
  for (std::size_t i = 0; i < by_angle.size(); ++i) EXPECT_EQ(by_angle[i].second, static_cast<int>(i / 4));
  EXPECT_THROW(deploy_labels(40, nullptr, LabelLayout::spatial, s), Error);
}

TEST(Labels, SingleNodeGetsOneClass) {
  Stream s(21);
  const auto labels = deploy_labels(1, nullptr, LabelLayout::iid, s);
  ASSERT_EQ(labels.size(), 1u);
  EXPECT_EQ(labels[0], 0);
}

TEST(Labels, SamplesSplitWithinClass) {
  auto data = small_dataset(6, 30);
  std::vector<int> labels{0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const auto local = assign_samples(*data, labels);
  EXPECT_EQ(local[0].size(), 3u);
  EXPECT_EQ(local[1].size(), 3u);
  EXPECT_EQ(local[2].size(), 6u);
  for (std::size_t i = 0; i < local.size(); ++i)
    for (int idx : local[i]) EXPECT_EQ(data->labels[static_cast<std::size_t>(idx)], labels[i]);
  auto tiny = small_dataset(1, 31);
  EXPECT_THROW(assign_samples(*tiny, {0, 0}), Error);
}

TEST(Features, LoaderNormalizesAndValidates) {
  std::ostringstream row;
  row << "3";
  for (int c = 0; c < kFeatureDim; ++c) row << ", " << (c + 1);
  std::istringstream good("# header\n" + row.str() + "\n");
  const LabeledDataset data = load_features(good);
  ASSERT_EQ(data.size(), 1);
  EXPECT_EQ(data.labels[0], 3);
  EXPECT_NEAR(data.features[0].norm(), 1.0, 1e-12);

  std::istringstream short_row("1, 2, 3\n");
  EXPECT_THROW(load_features(short_row), Error);
  std::istringstream label_row("12" + row.str().substr(1) + "\n");
  EXPECT_THROW(load_features(label_row), Error);
  std::istringstream junk("x" + row.str().substr(1) + "\n");
  EXPECT_THROW(load_features(junk), Error);
}

TEST(Features, SyntheticSamplesAreUnitNorm) {
  auto data = small_dataset(20, 40);
  EXPECT_EQ(data->size(), 200);
  for (const auto& f : data->features) EXPECT_NEAR(f.norm(), 1.0, 1e-9);
}
