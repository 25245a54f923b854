#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ncota/baselines.hpp"
#include "ncota/channel.hpp"
#include "ncota/codec.hpp"
#include "ncota/core.hpp"
#include "ncota/experiment.hpp"
#include "ncota/frame.hpp"
#include "ncota/metrics.hpp"
#include "ncota/optimizer.hpp"
#include "ncota/phy.hpp"
#include "ncota/problems.hpp"
#include "ncota/random.hpp"
#include "ncota/theory.hpp"

namespace ncota {

struct SuiteResult {
  std::string name;
  std::string statistic;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
  std::string detail;
};

inline void print_result(std::ostream& out, const SuiteResult& r) {
  out << "suite=" << r.name << " statistic=" << r.statistic << " value=" << r.value << " threshold=" << r.threshold
      << " verdict=" << (r.pass ? "PASS" : "FAIL");
  if (!r.detail.empty()) out << " detail=\"" << r.detail << '"';
  out << '\n';
}

struct VerifyOptions {
  std::uint64_t seed = 20261016;
  double noise_mismatch = 1.0;  // receivers assume N0 * factor; != 1 injects a fault
  std::uint64_t frames = 200000;
  int rate_trials = 10;
  std::uint64_t rate_iterations = 200000;
};

namespace detail {

inline ModelVector ball_point(Index d, double radius, Stream& s) {
  Vector v(d);
  for (auto& x : v) x = s.normal();
  return v.normalized() * radius * std::pow(s.uniform(), 1.0 / static_cast<double>(d));
}

inline Matrix random_gains(int n, double lo, double hi, Stream& s) {
  Matrix g = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) g(i, j) = g(j, i) = lo + (hi - lo) * s.uniform();
  return g;
}

/// f_i(w) = 1/2 ||w||^2 on every node; a placeholder when only the
/// communication path matters.
inline LinearRegression identity_problem(int nodes, Index d) {
  std::vector<LinearRegression::Node> n(static_cast<std::size_t>(nodes), {Matrix::Identity(d, d), Vector::Zero(d)});
  return LinearRegression(std::move(n), 1.0, 1.0);
}

/// Consensus-estimation setup on a small Rayleigh network with frozen states.
struct EstimationSetup {
  LinearRegression problem = identity_problem(2, 1);
  NcotaConfig cfg;
  std::vector<ModelVector> states;
  Matrix gains;
};

inline EstimationSetup estimation_setup(int nodes, Index d, int symbols, double p_tx, double noise, double mismatch, Stream& s) {
  EstimationSetup e;
  e.problem = identity_problem(nodes, d);
  const double r = 1.0;
  e.gains = random_gains(nodes, 0.1, 1.0, s);
  for (int i = 0; i < nodes; ++i) e.states.push_back(ball_point(d, r, s));
  e.cfg.problem = &e.problem;
  e.cfg.domain = ParamDomain(d, r);
  e.cfg.codebook = build_cp_codebook(d, r);
  const int M = e.cfg.codebook.size();
  e.cfg.plan = make_frame_plan(symbols, M, 0, M);
  e.cfg.channel.propagation = Propagation::rayleigh;
  e.cfg.channel.fading = Fading::iid;
  e.cfg.channel.mean_gains = e.gains;
  e.cfg.energy = 1.0;
  e.cfg.noise = noise;
  e.cfg.assumed_noise = noise * mismatch;
  e.cfg.p_tx = p_tx;
  e.cfg.schedule.mode = StepsizeMode::constant;
  return e;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline SuiteResult verify_unbiasedness(const VerifyOptions& opt) {
  Stream s = SeedSpec{opt.seed, 1}.stream(0, kSharedNode, Purpose::oracle);
  auto e = detail::estimation_setup(5, 3, 1, 0.4, 0.5, opt.noise_mismatch, s);
  e.cfg.problem = &e.problem;
  const int n = 5;
  const SeedSpec seed{opt.seed, 1};
  std::vector<Vector> sum(n, Vector::Zero(3));
  std::vector<Vector> sumsq(n, Vector::Zero(3));
  for (std::uint64_t k = 0; k < opt.frames; ++k) {
    const auto res = iterate(e.states, e.cfg, k, seed);
    for (int i = 0; i < n; ++i) {
      const Vector& d = res.nodes[static_cast<std::size_t>(i)].disagreement;
      sum[static_cast<std::size_t>(i)] += d;
      sumsq[static_cast<std::size_t>(i)] += d.cwiseAbs2();
    }
  }
  const double F = static_cast<double>(opt.frames);
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vector exact = exact_disagreement(i, e.states, e.gains);
    const Vector mean = sum[static_cast<std::size_t>(i)] / F;
    const Vector var = (sumsq[static_cast<std::size_t>(i)] / F - mean.cwiseAbs2()) * (F / (F - 1.0));
    for (Index c = 0; c < 3; ++c) worst = std::max(worst, std::abs(mean[c] - exact[c]) / std::sqrt(var[c] / F));
  }
  return {"unbiasedness", "max |z| of mean disagreement estimate", worst, 4.0, worst <= 4.0,
          std::to_string(opt.frames) + " frames, N=5, d=3, Q=M=7"};
}

inline SuiteResult verify_variance(const VerifyOptions& opt) {
  struct Case {
    int symbols;
    double p_tx;
    double noise;
  };
  const Case cases[] = {{1, 0.4, 0.5}, {2, 0.25, 1.0}, {2, 0.6, 0.1}};
  double worst = 0.0;
  std::ostringstream detail;
  int idx = 0;
  for (const auto& c : cases) {
    Stream s = SeedSpec{opt.seed, 2}.stream(static_cast<std::uint64_t>(idx), kSharedNode, Purpose::oracle);
    auto e = detail::estimation_setup(5, 3, c.symbols, c.p_tx, c.noise, 1.0, s);
    e.cfg.problem = &e.problem;
    const int n = 5;
    const SeedSpec seed{opt.seed, 100 + static_cast<std::uint64_t>(idx)};
    std::vector<Vector> exact;
    for (int i = 0; i < n; ++i) exact.push_back(exact_disagreement(i, e.states, e.gains));
    const std::uint64_t frames = opt.frames / 2;
    double second = 0.0;
    for (std::uint64_t k = 0; k < frames; ++k) {
      const auto res = iterate(e.states, e.cfg, k, seed);
      for (int i = 0; i < n; ++i) second += (res.nodes[static_cast<std::size_t>(i)].disagreement - exact[static_cast<std::size_t>(i)]).squaredNorm();
    }
    const double empirical = second / (static_cast<double>(frames) * n);
    TheoryConstants tc;
    const GainLaplacian g = make_gain_laplacian(e.gains);
    tc.max_degree = g.max_degree;
    tc.theta = 1.0;
    tc.varpi = rayleigh_dispersion(e.cfg.plan).varpi;
    tc.components = e.cfg.plan.components;
    tc.units = e.cfg.plan.resource_units();
    tc.energy = e.cfg.energy;
    tc.noise = c.noise;
    tc.p_tx = c.p_tx;
    const double bound = sigma1_bound(tc, e.cfg.codebook);
    worst = std::max(worst, empirical / bound);
    detail << (idx ? "; " : "") << "Q=" << tc.units << " p=" << c.p_tx << " N0=" << c.noise << ": " << empirical << " <= " << bound;
    ++idx;
  }
  return {"variance", "max empirical variance / sigma1 bound", worst, 1.0, worst <= 1.0, detail.str()};
}

inline SuiteResult verify_energy(const VerifyOptions& opt) {
  Stream s = SeedSpec{opt.seed, 3}.stream(0, kSharedNode, Purpose::oracle);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const int M = 1 + static_cast<int>(s.below(40));
    const int O = 1 + static_cast<int>(s.below(3));
    const int SC = (M + O - 1) / O + static_cast<int>(s.below(20));
    const FramePlan plan = make_frame_plan(O, SC, 0, M);
    std::vector<double> w(static_cast<std::size_t>(M));
    for (auto& v : w) v = s.uniform() * (s.bernoulli(0.2) ? 0.0 : 1.0);
    w[s.below(static_cast<std::uint64_t>(M))] += 0.5;
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& v : w) v /= total;
    const EnergyProfile p(w);
    const double E = std::pow(10.0, -20.0 + 22.0 * s.uniform());
    const int shift = static_cast<int>(s.below(static_cast<std::uint64_t>(M)));
    const auto phases = draw_phases(plan.resource_units(), s);
    const CVector x = tx_signal(p, E, plan, shift, phases);
    worst = std::max(worst, std::abs(x.squaredNorm() / plan.resource_units() - E) / E);
  }
  return {"energy", "max |(1/Q)||x||^2 - E| / E", worst, 1e-12, worst <= 1e-12, "1000 random profiles and frame plans"};
}

inline SuiteResult verify_bias(const VerifyOptions& opt) {
  Stream s = SeedSpec{opt.seed, 4}.stream(0, kSharedNode, Purpose::oracle);
  const int n = 3;
  const Index d = 2;
  const double r = 1.0;
  const Codebook cb = build_cp_codebook(d, r);
  const int M = cb.size();
  const FramePlan plan = make_frame_plan(1, 2 * M, 0, M);
  ChannelSpec spec;
  spec.propagation = Propagation::rayleigh;
  spec.fading = Fading::fixed;
  spec.mean_gains = detail::random_gains(n, 0.3, 1.0, s);
  const double E = 1.0;
  const double N0 = 0.2;
  const double p = 0.5;
  std::vector<EnergyProfile> profiles;
  for (int j = 0; j < n; ++j) profiles.push_back(encode_cp(detail::ball_point(d, r, s), 0.0, cb));

  const SeedSpec seed{opt.seed, 4};
  const ChannelRealization channel(spec, plan, seed, 0);
  const CVector h1 = channel.gains(0, 1);
  const CVector h2 = channel.gains(0, 2);

  // Static-channel expectation without shifts, and the unbiased target.
  Vector biased(M), target(M);
  for (int m = 0; m < M; ++m) {
    double direct = 0.0;
    double cross = 0.0;
    for (int q : plan.sets[static_cast<std::size_t>(m)]) {
      direct += std::norm(h1[q]) * profiles[1][m] + std::norm(h2[q]) * profiles[2][m];
      cross += std::real(h2[q] * std::conj(h1[q]));
    }
    const double R = plan.set_size(m);
    biased[m] = direct / R + 2.0 * p * cross / R * std::sqrt(profiles[1][m] * profiles[2][m]);
    target[m] = realized_average_gain(h1, plan) * profiles[1][m] + realized_average_gain(h2, plan) * profiles[2][m];
  }

  double worst = 0.0;
  double separation = 0.0;
  for (bool shifts : {false, true}) {
    Vector sum = Vector::Zero(M), sumsq = Vector::Zero(M);
    const std::uint64_t frames = opt.frames;
    for (std::uint64_t k = 0; k < frames; ++k) {
      Stream shared = seed.stream(k, kSharedNode, Purpose::shift);
      const int shift = shifts ? draw_shift(M, shared) : 0;
      std::vector<bool> on(n);
      for (int j = 0; j < n; ++j) {
        Stream ds = seed.stream(k, static_cast<std::uint64_t>(j), Purpose::decision);
        on[static_cast<std::size_t>(j)] = ds.bernoulli(p);
      }
      std::vector<Transmission> tx;
      for (int j = 1; j < n; ++j) {
        if (!on[static_cast<std::size_t>(j)]) continue;
        Stream ph = seed.stream(k, static_cast<std::uint64_t>(j), Purpose::phase);
        const auto phases = shifts ? draw_phases(plan.resource_units(), ph) : std::vector<double>(static_cast<std::size_t>(plan.resource_units()), 0.0);
        tx.push_back({j, tx_signal(profiles[static_cast<std::size_t>(j)], E, plan, shift, phases)});
      }
      Stream ns = seed.stream(k, 0, Purpose::noise);
      const CVector y = rx_signal(0, std::span<const Transmission>(tx), channel, plan.resource_units(), N0, ns);
      const Vector est = energy_estimates(y, on[0], plan, shift, p, E, N0);
      sum += est;
      sumsq += est.cwiseAbs2();
    }
    const double F = static_cast<double>(frames);
    const Vector mean = sum / F;
    const Vector se = ((sumsq / F - mean.cwiseAbs2()) * (F / (F - 1.0) / F)).cwiseSqrt();
    const Vector& ref = shifts ? target : biased;
    for (int m = 0; m < M; ++m) {
      worst = std::max(worst, std::abs(mean[m] - ref[m]) / se[m]);
      if (!shifts) separation = std::max(separation, std::abs(biased[m] - target[m]) / se[m]);
    }
  }
  // The bias must also be large enough to be visible at this sample size.
  const bool visible = separation > 4.0;
  std::ostringstream detail;
  detail << "bias visible at " << separation << " standard errors";
  return {"bias", "max |z| against the static-channel expectations", worst, 4.0, worst <= 4.0 && visible, detail.str()};
}

// Rate experiment shared by the convergence and Theorem-2 suites.
struct RateRun {
  ExperimentSpec spec;
  TrialContext ctx;
  std::vector<std::vector<MetricsRow>> trials;
};

inline ExperimentSpec rate_spec(const VerifyOptions& opt) {
  ExperimentSpec e;
  e.algorithm = Algorithm::ncota;
  e.iterations = opt.rate_iterations;
  e.trials = opt.rate_trials;
  e.seed = opt.seed;
  e.stride = 100;
  e.pin_deployment = true;
  e.threads = 0;
  e.nodes = 10;
  e.propagation = Propagation::rayleigh;
  e.fading = Fading::iid;
  e.gain_min = 0.2;
  e.gain_max = 1.0;
  e.symbols = 1;
  e.subcarriers = 16;
  e.cyclic_prefix = 0;
  e.energy = 1.0;
  e.noise = 0.1;
  e.problem = ProblemKind::linreg;
  e.linreg.nodes = 10;
  e.linreg.dim = 5;
  e.linreg.mu = 1.0;
  e.linreg.smoothness = 3.0;
  e.linreg.heterogeneity = 0.002;
  e.linreg.noise = 0.0;
  e.mode = StepsizeMode::decreasing;
  return e;
}

inline RateRun run_rate_experiment(const VerifyOptions& opt) {
  RateRun run;
  run.spec = rate_spec(opt);
  run.ctx = prepare_trial(run.spec, 0);
  run.trials = run_experiment(run.spec).trials;
  return run;
}

namespace detail {
inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace detail

inline SuiteResult verify_rate(const RateRun& run) {
  const auto& first = run.trials.front();
  std::vector<double> ks, logs;
  double at100 = 0.0, at_end = 0.0;
  for (std::size_t r = 0; r < first.size(); ++r) {
    std::vector<double> vals;
    for (const auto& t : run.trials) vals.push_back(t[r].norm_err);
    const double med = detail::median(vals);
    const auto k = first[r].k;
    if (k == 100) at100 = med;
    if (k == run.spec.iterations) at_end = med;
    if (k >= 10000 && k <= run.spec.iterations) {
      ks.push_back(std::log(static_cast<double>(k)));
      logs.push_back(std::log(med));
    }
  }
  const double kx = std::accumulate(ks.begin(), ks.end(), 0.0) / ks.size();
  const double ly = std::accumulate(logs.begin(), logs.end(), 0.0) / logs.size();
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    num += (ks[i] - kx) * (logs[i] - ly);
    den += (ks[i] - kx) * (ks[i] - kx);
  }
  const double slope = num / den;
  const double ratio = at_end / at100;
  const bool pass = ratio < 0.1 && slope >= -0.9 && slope <= -0.25;
  std::ostringstream detail;
  detail << "median error k=100: " << at100 << ", k=" << run.spec.iterations << ": " << at_end << " (ratio " << ratio
         << ", need < 0.1); slope over [1e4, K] in [-0.9, -0.25]";
  return {"rate", "log-log slope of median normalized error", slope, -0.25, pass, detail.str()};
}

inline SuiteResult verify_theorem2(const RateRun& run) {
  const TheoryConstants c = theory_constants(run.spec, run.ctx);
  const StepsizeSchedule& s = run.ctx.schedule;
  const std::uint64_t kbar = kappa_bar(c, s);
  const double scale = run.ctx.wstar.squaredNorm();
  int checked = 0;
  int violated = 0;
  double tightest = 0.0;
  const auto& first = run.trials.front();
  for (std::size_t r = 0; r < first.size(); ++r) {
    const auto k = first[r].k;
    if (k < kbar) continue;
    double mean_sq = 0.0;
    for (const auto& t : run.trials) mean_sq += t[r].norm_err * scale;
    const double empirical = std::sqrt(mean_sq / run.trials.size());
    const double bound = theorem2_bounds(c, s.eta0, s.gamma0, s.delta, kbar, k).total();
    ++checked;
    if (empirical > bound) ++violated;
    tightest = std::max(tightest, empirical / bound);
  }
  std::ostringstream detail;
  detail << "kappa_bar=" << kbar << ", " << checked << " sampled k checked, " << violated << " violations";
  return {"theorem2", "max empirical error / bound at k >= kappa_bar", tightest, 1.0, checked > 0 && violated == 0, detail.str()};
}

inline SuiteResult verify_ptx(const VerifyOptions& opt) {
  Stream s = SeedSpec{opt.seed, 6}.stream(0, kSharedNode, Purpose::oracle);
  double worst = 0.0;
  bool single = true;
  for (int t = 0; t < 100; ++t) {
    PtxInputs in;
    in.theta = 3.0 * s.uniform();
    in.varpi = 3.0 * s.uniform();
    in.components = static_cast<double>(3 + s.below(2000));
    in.units = std::ceil(in.components * (1.0 + 3.0 * s.uniform()));
    in.noise_ratio = std::pow(10.0, -3.0 + 4.0 * s.uniform());
    single = single && ptx_sign_changes(in) == 1;
    worst = std::max(worst, std::abs(ptx_residual(in, solve_ptx(in))));
  }
  const double noisy = solve_ptx(PtxInputs{1.0, std::sqrt(901.0 / 1024.0), 901.0, 1024.0, 1e6});
  const double repeated = solve_ptx(PtxInputs{1.0, 0.0, 1.0, 1e6, 0.0});
  const double limit_err = std::max(std::abs(noisy - 2.0 / 3.0), std::abs(repeated - 0.5));
  std::ostringstream detail;
  detail << "noise-dominated root " << noisy << ", repetition-dominated root " << repeated << ", one sign change: " << (single ? "yes" : "no");
  return {"ptx", "max |h(p_tx)| over 100 random tuples", worst, 1e-12, worst < 1e-12 && single && limit_err <= 1e-3, detail.str()};
}

inline SuiteResult verify_codec(const VerifyOptions& opt) {
  Stream s = SeedSpec{opt.seed, 7}.stream(0, kSharedNode, Purpose::oracle);
  double worst = 0.0;
  for (Index d : {Index{1}, Index{2}, Index{10}, Index{450}})
    for (int t = 0; t < 250; ++t) {
      const double r = 0.5 + 4.5 * s.uniform();
      const Codebook cb = build_cp_codebook(d, r);
      const ModelVector w = detail::ball_point(d, r, s);
      const double phi = s.uniform() * max_admissible_phi(w, cb);
      const double err = (reconstruct(encode_cp(w, phi, cb), cb) - w).norm() / std::sqrt(static_cast<double>(d));
      worst = std::max(worst, err);
    }
  return {"codec", "max ||reconstruct(encode(w)) - w|| / sqrt(d)", worst, 1e-12, worst <= 1e-12, "1000 cases, d in {1,2,10,450}"};
}

inline SuiteResult verify_laplacian(const VerifyOptions& opt) {
  Stream s = SeedSpec{opt.seed, 8}.stream(0, kSharedNode, Purpose::oracle);
  double worst_null = 0.0;
  double worst_rows = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + static_cast<int>(s.below(29));
    const GainLaplacian g = make_gain_laplacian(detail::random_gains(n, 0.0, 1.0, s));
    worst_null = std::max(worst_null, std::abs(g.eigenvalues[0]) / g.rhoN);
    for (int i = 0; i < n; ++i) worst_rows = std::max(worst_rows, std::abs(g.laplacian.row(i).sum()) / g.laplacian(i, i));
  }
  Matrix two(2, 2);
  two << 0.0, 0.7, 0.7, 0.0;
  const GainLaplacian g2 = make_gain_laplacian(two);
  const double analytic = std::max(std::abs(g2.eigenvalues[0]), std::abs(g2.eigenvalues[1] - 1.4));
  const bool pass = worst_null <= 1e-10 && worst_rows <= 1e-12 && analytic <= 1e-12;
  std::ostringstream detail;
  detail << "row sums " << worst_rows << " (<= 1e-12), N=2 spectrum error " << analytic;
  return {"laplacian", "max |rho1| / rhoN", worst_null, 1e-10, pass, detail.str()};
}

inline SuiteResult verify_gradients(const VerifyOptions& opt) {
  Stream s = SeedSpec{opt.seed, 9}.stream(0, kSharedNode, Purpose::oracle);
  const double h = 1e-6;
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const int c = static_cast<int>(s.below(kClasses));
    Vector f(kFeatureDim);
    for (auto& v : f) v = s.normal();
    f.normalize();
    Vector w(kCeDim);
    for (auto& v : w) v = 0.5 * s.normal();
    const double mu = 0.01 + s.uniform();
    const Vector g = ce_gradient(c, f, w, mu);
    Vector fd(kCeDim);
    for (Index m = 0; m < kCeDim; ++m) {
      Vector a = w, b = w;
      a[m] += h;
      b[m] -= h;
      fd[m] = (ce_loss(c, f, a, mu) - ce_loss(c, f, b, mu)) / (2.0 * h);
    }
    worst = std::max(worst, (g - fd).lpNorm<Eigen::Infinity>() / g.lpNorm<Eigen::Infinity>());
  }
  for (int t = 0; t < 20; ++t) {
    const Index d = 1 + static_cast<Index>(s.below(12));
    const Index rows = 1 + static_cast<Index>(s.below(15));
    Matrix A(rows, d);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < d; ++j) A(i, j) = s.normal();
    Vector y(rows), w(d);
    for (auto& v : y) v = s.normal();
    for (auto& v : w) v = s.normal();
    const Vector g = linreg_objective(A, y, w).second;
    Vector fd(d);
    for (Index m = 0; m < d; ++m) {
      Vector a = w, b = w;
      a[m] += h;
      b[m] -= h;
      fd[m] = (linreg_objective(A, y, a).first - linreg_objective(A, y, b).first) / (2.0 * h);
    }
    worst = std::max(worst, (g - fd).lpNorm<Eigen::Infinity>() / g.lpNorm<Eigen::Infinity>());
  }
  return {"gradients", "max relative error vs central differences", worst, 1e-5, worst <= 1e-5, "20 cross-entropy and 20 linear-regression points"};
}

inline SuiteResult verify_meanfield(const VerifyOptions& opt) {
  Stream s = SeedSpec{opt.seed, 10}.stream(0, kSharedNode, Purpose::oracle);
  const int n = 6;
  LinregSpec ls;
  ls.nodes = n;
  ls.dim = 4;
  ls.heterogeneity = 1.0;
  const LinearRegression f = make_synthetic_linreg(ls, s);
  const Matrix gains = detail::random_gains(n, 0.1, 1.0, s);
  NcotaConfig cfg;
  cfg.problem = &f;
  // Small ball so the projection is active along the way.
  cfg.domain = ParamDomain(4, 0.5 * compute_wstar(f).norm());
  cfg.codebook = build_cp_codebook(4, cfg.domain.radius);
  cfg.plan = make_frame_plan(1, cfg.codebook.size(), 0, cfg.codebook.size());
  cfg.mean_field = true;
  cfg.exact_gains = gains;
  cfg.schedule = {0.3, 0.2, 0.1, StepsizeMode::decreasing};

  Matrix lap = -gains;
  for (int i = 0; i < n; ++i) lap(i, i) = gains.row(i).sum();
  std::vector<ModelVector> states(n, ModelVector::Zero(4));
  Matrix W = Matrix::Zero(n, 4);
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 50; ++k) {
    states = iterate(states, cfg, k, SeedSpec{opt.seed, 10}).states;
    const Stepsizes st = stepsizes(cfg.schedule, k);
    Matrix grad(n, 4);
    for (int i = 0; i < n; ++i) {
      const auto& node = f.at(i);
      grad.row(i) = (node.A.transpose() * (node.A * W.row(i).transpose() - node.y)).transpose();
    }
    Matrix next = (Matrix::Identity(n, n) - st.gamma * lap) * W - st.eta * grad;
    for (int i = 0; i < n; ++i) {
      const double norm = next.row(i).norm();
      if (norm > cfg.domain.radius) next.row(i) *= cfg.domain.radius / norm;
    }
    W = next;
    for (int i = 0; i < n; ++i) worst = std::max(worst, (states[static_cast<std::size_t>(i)] - W.row(i).transpose()).lpNorm<Eigen::Infinity>());
  }
  return {"meanfield", "max entry difference vs matrix-form recursion", worst, 1e-12, worst <= 1e-12, "50 iterations, N=6, d=4"};
}

inline SuiteResult verify_frame(const VerifyOptions&) {
  const double two = frame_duration(make_frame_plan(2, 512, 133, 901), 5e6);
  const double one = frame_duration(make_frame_plan(1, 512, 133, 257), 5e6);
  const double err = std::max(std::abs(two - 258e-6) / 258e-6, std::abs(one - 129e-6) / 129e-6);
  std::ostringstream detail;
  detail << "O=2: " << two * 1e6 << " us, O=1: " << one * 1e6 << " us";
  return {"frame", "max relative deviation from 258 us / 129 us", err, 1e-15, err <= 1e-15, detail.str()};
}

inline SuiteResult verify_sigma2(const VerifyOptions& opt) {
  Stream s = SeedSpec{opt.seed, 12}.stream(0, kSharedNode, Purpose::oracle);
  Stream means = SeedSpec{opt.seed, 12}.stream(1, kSharedNode, Purpose::data);
  Stream draws = SeedSpec{opt.seed, 12}.stream(2, kSharedNode, Purpose::data);
  auto data = std::make_shared<LabeledDataset>(make_synthetic_classification(10, 0.5, means, draws));
  double worst = 0.0;
  std::ostringstream detail;
  for (int t = 0; t < 10; ++t) {
    const int D = 2 + static_cast<int>(s.below(49));
    const int B = 1 + static_cast<int>(s.below(static_cast<std::uint64_t>(D)));
    std::vector<int> pool(static_cast<std::size_t>(data->size()));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < D; ++i) std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(i) + s.below(static_cast<std::uint64_t>(data->size() - i))]);
    pool.resize(static_cast<std::size_t>(D));
    const CrossEntropy f(data, {pool}, 0.05);
    const ModelVector wstar = compute_wstar(f);
    const ParamDomain domain(f.dim(), compute_radius(f));
    const ModelVector w = detail::ball_point(f.dim(), domain.radius, s);
    const Vector exact = f.gradient(0, w);
    const int draws_n = 4000;
    double second = 0.0;
    for (int k = 0; k < draws_n; ++k) {
      Stream ms = SeedSpec{opt.seed, 12}.stream(static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(t), Purpose::minibatch);
      second += (minibatch_gradient(f, 0, w, B, ms) - exact).squaredNorm();
    }
    const double empirical = second / draws_n;
    const double bound = sigma2_bound(D, B, sample_gradient_spread(f, wstar), f.smoothness(), domain.diameter());
    const double ratio = B == D ? (empirical == 0.0 ? 0.0 : 2.0) : empirical / bound;
    worst = std::max(worst, ratio);
    detail << (t ? "; " : "") << "D=" << D << " B=" << B << ": " << empirical << " <= " << bound;
  }
  return {"sigma2", "max empirical minibatch variance / bound", worst, 1.0, worst <= 1.0, detail.str()};
}

// ---------------------------------------------------------------------------

struct SuiteInfo {
  std::string name;
  int criterion;
};

inline const std::vector<SuiteInfo>& suite_list() {
  static const std::vector<SuiteInfo> list = {
      {"unbiasedness", 1}, {"variance", 2}, {"energy", 3}, {"bias", 4},       {"rate", 5},   {"ptx", 6},    {"codec", 7},
      {"laplacian", 8},    {"gradients", 9}, {"meanfield", 10}, {"frame", 11}, {"sigma2", 12}, {"theorem2", 13},
  };
  return list;
}

/// Runs the named suites (all when empty); the rate experiment is shared by
/// "rate" and "theorem2" and run once.
inline std::vector<SuiteResult> run_suites(const std::vector<std::string>& names, const VerifyOptions& opt,
                                           const std::function<void(const SuiteResult&)>& report = {}) {
  std::vector<std::string> todo = names;
  if (todo.empty())
    for (const auto& s : suite_list()) todo.push_back(s.name);
  std::optional<RateRun> rate;
  auto rate_run = [&]() -> const RateRun& {
    if (!rate) rate = run_rate_experiment(opt);
    return *rate;
  };
  std::vector<SuiteResult> out;
  for (const auto& name : todo) {
    SuiteResult r;
    try {
      if (name == "unbiasedness") r = verify_unbiasedness(opt);
      else if (name == "variance") r = verify_variance(opt);
      else if (name == "energy") r = verify_energy(opt);
      else if (name == "bias") r = verify_bias(opt);
      else if (name == "rate") r = verify_rate(rate_run());
      else if (name == "ptx") r = verify_ptx(opt);
      else if (name == "codec") r = verify_codec(opt);
      else if (name == "laplacian") r = verify_laplacian(opt);
      else if (name == "gradients") r = verify_gradients(opt);
      else if (name == "meanfield") r = verify_meanfield(opt);
      else if (name == "frame") r = verify_frame(opt);
      else if (name == "sigma2") r = verify_sigma2(opt);
      else if (name == "theorem2") r = verify_theorem2(rate_run());
      else throw Error("unknown verify suite '" + name + "'");
    } catch (const Error& e) {
      if (std::string(e.what()).rfind("unknown verify suite", 0) == 0) throw;
      r = {name, "error", 0.0, 0.0, false, e.what()};
    }
    if (report) report(r);
    out.push_back(r);
  }
  return out;
}

}  // namespace ncota
