#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "ncota/config.hpp"
#include "ncota/experiment.hpp"
#include "ncota/metrics.hpp"
#include "ncota/verify.hpp"

using namespace ncota;

namespace {

Config parse_text(const std::string& text) {
  std::istringstream in(text);
  return Config::parse(in, "cfg");
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

ExperimentSpec tiny_spec() {
  ExperimentSpec e;
  e.iterations = 20;
  e.stride = 5;
  e.trials = 3;
  e.threads = 1;
  e.seed = 7;
  e.nodes = 4;
  e.linreg.nodes = 4;
  e.linreg.dim = 2;
  e.subcarriers = 8;
  e.block = 8;
  e.gain_min = 0.5;
  e.gain_max = 1.0;
  e.noise = 0.05;
  return e;
}

std::string csv_of(const ExperimentResult& r) {
  std::ostringstream out;
  write_csv(out, r);
  return out.str();
}

}  // namespace

TEST(Config, RoundTripUpToKeyOrder) {
  const std::string text =
      "[phy]\nsymbols = 2\nnoise = 0.25   # comment\n\n[experiment]\ntrials = 4\nalgorithm = ncota\n[channel]\nmodel = rayleigh\n";
  const Config a = parse_text(text);
  const Config b = parse_text(a.serialize());
  EXPECT_EQ(a.serialize(), b.serialize());
  EXPECT_EQ(a.text("phy", "noise", ""), "0.25");
  EXPECT_EQ(a.integer("experiment", "trials", 0), 4);
  for (const auto& [section, entries] : a.sections())
    for (const auto& [key, entry] : entries) EXPECT_EQ(b.text(section, key, "<missing>"), entry.value);
}

TEST(Config, KeysBeforeAnySectionBelongToExperiment) {
  const Config c = parse_text("trials = 3\n");
  EXPECT_TRUE(c.has("experiment", "trials"));
}

TEST(Config, SyntaxErrorsCarryLineNumbers) {
  EXPECT_EQ(error_of([] { parse_text("[phy]\nsymbols = 2\nnonsense\n"); }), "cfg:3: expected 'key = value'");
  EXPECT_NE(error_of([] { parse_text("a = 1\n\n[phy\n"); }).find("cfg:3:"), std::string::npos);
  const auto dup = error_of([] { parse_text("[phy]\nnoise = 1\nsymbols = 1\nnoise = 2\n"); });
  EXPECT_NE(dup.find("cfg:4:"), std::string::npos);
  EXPECT_NE(dup.find("duplicate"), std::string::npos);
}

TEST(Config, TypeErrorsCarryLineNumbers) {
  const Config c = parse_text("[experiment]\n\ntrials = 2.5\nseed = abc\n");
  EXPECT_NE(error_of([&] { (void)c.integer("experiment", "trials", 1); }).find("cfg:3:"), std::string::npos);
  EXPECT_NE(error_of([&] { (void)c.number("experiment", "seed", 1.0); }).find("cfg:4:"), std::string::npos);
}

TEST(Config, SetPathRequiresSectionAndKey) {
  Config c = parse_text("");
  c.set_path("phy.noise", "0.5");
  EXPECT_DOUBLE_EQ(c.number("phy", "noise", 0.0), 0.5);
  EXPECT_THROW(c.set_path("noise", "1"), Error);
  EXPECT_THROW(c.set_path("phy.", "1"), Error);
}

TEST(SpecFromConfig, UnknownKeysAndSectionsAreRejectedWithLine) {
  const auto key = error_of([] { spec_from_config(parse_text("[phy]\nsymbols = 2\nsymbol = 3\n")); });
  EXPECT_NE(key.find("cfg:3:"), std::string::npos);
  EXPECT_NE(key.find("unknown key 'symbol'"), std::string::npos);
  const auto section = error_of([] { spec_from_config(parse_text("[phys]\nsymbols = 2\n")); });
  EXPECT_NE(section.find("cfg:2:"), std::string::npos);
  EXPECT_NE(section.find("unknown section"), std::string::npos);
}

TEST(SpecFromConfig, Defaults) {
  const ExperimentSpec e = spec_from_config(parse_text(""));
  EXPECT_EQ(e.trials, 20);
  EXPECT_EQ(e.stride, 50u);
  EXPECT_FALSE(e.pin_deployment);
  EXPECT_EQ(e.algorithm, Algorithm::ncota);
}

TEST(SpecFromConfig, FrameTooSmallForCodebook) {
  const auto msg = error_of([] { spec_from_config(parse_text("[problem]\ndim = 5\n[phy]\nsubcarriers = 10\nsymbols = 1\n")); });
  EXPECT_NE(msg.find("cfg:5:"), std::string::npos);
  EXPECT_NE(msg.find("M = 11"), std::string::npos);
  EXPECT_NO_THROW(spec_from_config(parse_text("[problem]\ndim = 5\n[phy]\nsubcarriers = 11\n")));
}

TEST(SpecFromConfig, PhysicalUnitsAreConverted) {
  const ExperimentSpec e =
      spec_from_config(parse_text("[channel]\nbandwidth_mhz = 5\n[phy]\ntx_power_dbm = 30\nnoise_psd_dbm_hz = -174\n"));
  EXPECT_NEAR(e.energy, 1.0 / 5e6, 1e-12 / 5e6);
  EXPECT_NEAR(e.noise, std::pow(10.0, -20.4), 1e-12 * std::pow(10.0, -20.4));
  EXPECT_EQ(e.log.size(), 2u);
}

TEST(SpecFromConfig, ConflictingAndMisplacedKeys) {
  EXPECT_THROW(spec_from_config(parse_text("[phy]\nenergy = 1\ntx_power_dbm = 20\n")), Error);
  EXPECT_THROW(spec_from_config(parse_text("[channel]\ngain = 1\ngain_min = 0.5\n")), Error);
  EXPECT_THROW(spec_from_config(parse_text("[problem]\nkind = classification\ndim = 3\n")), Error);
  EXPECT_THROW(spec_from_config(parse_text("[problem]\nkind = linreg\nlabels = iid\n")), Error);
  EXPECT_THROW(spec_from_config(parse_text("[phy]\nptx = 1.5\n")), Error);
  EXPECT_THROW(spec_from_config(parse_text("[experiment]\nalgorithm = sgd\n")), Error);
  EXPECT_THROW(spec_from_config(parse_text("[phy]\nsubcarriers = 16\n[baseline]\nblock = 5\n")), Error);
}

TEST(SpecFromConfig, WordValues) {
  const ExperimentSpec e = spec_from_config(parse_text("[phy]\nptx = lemma\nphi = max\n[stepsize]\neta0 = baseline\ngamma0 = 0.3\n"));
  EXPECT_FALSE(e.p_tx.has_value());
  EXPECT_TRUE(e.phi_max);
  EXPECT_FALSE(e.eta0.has_value());
  ASSERT_TRUE(e.gamma0.has_value());
  EXPECT_DOUBLE_EQ(*e.gamma0, 0.3);
}

TEST(Metrics, NormalizedErrorExamples) {
  const ModelVector ws = (ModelVector(3) << 1.0, -2.0, 0.5).finished();
  const std::vector<ModelVector> at_opt(4, ws);
  EXPECT_DOUBLE_EQ(normalized_error(at_opt, ws), 0.0);
  const std::vector<ModelVector> zeros(4, ModelVector::Zero(3));
  EXPECT_DOUBLE_EQ(normalized_error(zeros, ws), 1.0);
  const std::vector<ModelVector> single{2.0 * ws};
  EXPECT_DOUBLE_EQ(normalized_error(single, ws), 1.0);
  std::vector<ModelVector> one_off(4, ws);
  one_off[2] = 2.0 * ws;
  EXPECT_DOUBLE_EQ(normalized_error(one_off, ws), 0.25);
  EXPECT_THROW(normalized_error(zeros, ModelVector::Zero(3)), Error);
}

TEST(Metrics, NormalizedErrorIsNonnegative) {
  Stream s = SeedSpec{3, 0}.stream(0, 0, Purpose::oracle);
  for (int t = 0; t < 100; ++t) {
    std::vector<ModelVector> w(3, ModelVector(4));
    for (auto& v : w)
      for (auto& x : v) x = s.normal();
    ModelVector ws(4);
    for (auto& x : ws) x = s.normal();
    EXPECT_GE(normalized_error(w, ws), 0.0);
  }
}

TEST(Metrics, TestErrorAtZeroTiesToClassZero) {
  Stream ms = SeedSpec{5, 0}.stream(0, 0, Purpose::oracle);
  Stream ss = SeedSpec{5, 0}.stream(0, 1, Purpose::oracle);
  LabeledDataset data = make_synthetic_classification(3, 0.5, ms, ss);
  data.features.push_back(data.features.front());
  data.labels.push_back(0);
  int zeros = 0;
  for (int l : data.labels) zeros += l == 0;
  const double expected = 1.0 - static_cast<double>(zeros) / data.size();
  EXPECT_DOUBLE_EQ(test_error(ModelVector::Zero(kCeDim), data), expected);
}

TEST(Metrics, TestErrorSeparableToyIsZero) {
  LabeledDataset data;
  for (int s = 0; s < 6; ++s) {
    Vector f = Vector::Zero(kFeatureDim);
    f[0] = s % 2 == 0 ? 1.0 : -1.0;
    f[1] = 0.1 * s;
    data.features.push_back(f);
    data.labels.push_back(s % 2 == 0 ? 1 : 0);
  }
  ModelVector w = ModelVector::Zero(kCeDim);
  w[0] = 5.0;
  EXPECT_DOUBLE_EQ(test_error(w, data), 0.0);
  EXPECT_DOUBLE_EQ(test_error(-w, data), 1.0);
  EXPECT_THROW(test_error(w, LabeledDataset{}), Error);
}

TEST(Metrics, TestErrorInUnitInterval) {
  Stream ms = SeedSpec{9, 0}.stream(0, 0, Purpose::oracle);
  Stream ss = SeedSpec{9, 0}.stream(0, 1, Purpose::oracle);
  const LabeledDataset data = make_synthetic_classification(5, 1.0, ms, ss);
  for (int t = 0; t < 20; ++t) {
    ModelVector w(kCeDim);
    for (auto& x : w) x = ms.normal();
    const double err = test_error(w, data);
    EXPECT_GE(err, 0.0);
    EXPECT_LE(err, 1.0);
  }
}

TEST(Metrics, WstarLinregMatchesGradientDescent) {
  Stream s = SeedSpec{11, 0}.stream(0, 0, Purpose::oracle);
  LinregSpec spec;
  spec.nodes = 6;
  spec.dim = 4;
  spec.heterogeneity = 0.3;
  const LinearRegression f = make_synthetic_linreg(spec, s);
  const ModelVector closed = compute_wstar(f);
  ModelVector w = ModelVector::Zero(4);
  const double step = 2.0 / (f.mu() + f.smoothness());
  for (int it = 0; it < 100000 && f.global_gradient(w).norm() > 1e-14; ++it) w -= step * f.global_gradient(w);
  EXPECT_LE((closed - w).norm(), 1e-8);
}

TEST(Metrics, WstarGradientDescentStoppingRule) {
  Stream ms = SeedSpec{13, 0}.stream(0, 0, Purpose::oracle);
  Stream ss = SeedSpec{13, 0}.stream(0, 1, Purpose::oracle);
  auto data = std::make_shared<const LabeledDataset>(make_synthetic_classification(4, 0.5, ms, ss));
  std::vector<std::vector<int>> assignment(2);
  for (int s = 0; s < data->size(); ++s) assignment[static_cast<std::size_t>(s % 2)].push_back(s);
  const CrossEntropy f(data, assignment, 0.05);
  const ModelVector ws = compute_wstar(f);
  const double g0 = f.global_gradient(ModelVector::Zero(kCeDim)).norm();
  EXPECT_LE(f.global_gradient(ws).norm(), 1e-10 * std::max(1.0, g0));
  EXPECT_LE(ws.norm(), g0 / f.mu() * (1.0 + 1e-12));
}

TEST(Metrics, SuboptimalityGapOfAverage) {
  Stream s = SeedSpec{17, 0}.stream(0, 0, Purpose::oracle);
  LinregSpec spec;
  spec.nodes = 3;
  spec.dim = 2;
  const LinearRegression f = make_synthetic_linreg(spec, s);
  const ModelVector ws = compute_wstar(f);
  const std::vector<ModelVector> at_opt(3, ws);
  EXPECT_NEAR(suboptimality_gap(f, at_opt, ws), 0.0, 1e-14);
  const ModelVector dir = (ModelVector(2) << 1.0, 0.0).finished();
  const std::vector<ModelVector> symmetric{ws + dir, ws - dir, ws};
  EXPECT_NEAR(suboptimality_gap(f, symmetric, ws), 0.0, 1e-14);
  const std::vector<ModelVector> shifted(3, ModelVector(ws + dir));
  EXPECT_NEAR(suboptimality_gap(f, shifted, ws), f.global_value(ws + dir) - f.global_value(ws), 1e-14);
  EXPECT_GT(suboptimality_gap(f, shifted, ws), 0.0);
}

TEST(Experiment, RowCountAndHeader) {
  const ExperimentSpec e = tiny_spec();
  const ExperimentResult r = run_experiment(e);
  ASSERT_EQ(r.trials.size(), 3u);
  for (const auto& t : r.trials) {
    ASSERT_EQ(t.size(), 5u);
    EXPECT_EQ(t.front().k, 0u);
    EXPECT_EQ(t.back().k, 20u);
  }
  std::istringstream csv(csv_of(r));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "trial,k,time_s,norm_err,subopt_gap,test_err");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 15);
}

TEST(Experiment, FinalSampleWhenStrideDoesNotDivide) {
  ExperimentSpec e = tiny_spec();
  e.iterations = 12;
  e.trials = 1;
  const ExperimentResult r = run_experiment(e);
  std::vector<std::uint64_t> ks;
  for (const auto& row : r.trials.front()) ks.push_back(row.k);
  EXPECT_EQ(ks, (std::vector<std::uint64_t>{0, 5, 10, 12}));
}

TEST(Experiment, BitIdenticalRerunsAndThreadIndependence) {
  ExperimentSpec e = tiny_spec();
  const std::string first = csv_of(run_experiment(e));
  EXPECT_EQ(first, csv_of(run_experiment(e)));
  e.threads = 3;
  EXPECT_EQ(first, csv_of(run_experiment(e)));
  e.seed = 8;
  EXPECT_NE(first, csv_of(run_experiment(e)));
}

TEST(Experiment, AggregateIsArithmeticMean) {
  const ExperimentResult r = run_experiment(tiny_spec());
  ASSERT_EQ(r.aggregate.size(), 5u);
  for (std::size_t i = 0; i < r.aggregate.size(); ++i) {
    double ne = 0.0;
    double gap = 0.0;
    for (const auto& t : r.trials) {
      ne += t[i].norm_err;
      gap += t[i].subopt_gap;
    }
    EXPECT_NEAR(r.aggregate[i].norm_err, ne / 3.0, 1e-12 * std::max(1.0, ne));
    EXPECT_NEAR(r.aggregate[i].subopt_gap, gap / 3.0, 1e-12 * std::max(1.0, std::abs(gap)));
    EXPECT_EQ(r.aggregate[i].trial, -1);
    EXPECT_TRUE(std::isnan(r.aggregate[i].test_err));
  }
  EXPECT_DOUBLE_EQ(r.aggregate.front().norm_err, 1.0);
}

TEST(Experiment, AggregateOfCoincidingTrialsEqualsEachTrial) {
  const ExperimentResult r = run_experiment(tiny_spec());
  const auto agg = aggregate_rows({r.trials[0], r.trials[0]});
  for (std::size_t i = 0; i < agg.size(); ++i) {
    EXPECT_EQ(agg[i].norm_err, r.trials[0][i].norm_err);
    EXPECT_EQ(agg[i].subopt_gap, r.trials[0][i].subopt_gap);
  }
}

TEST(Experiment, TimeColumnIsIterationTimesFrame) {
  ExperimentSpec e = tiny_spec();
  e.trials = 1;
  const ExperimentResult r = run_experiment(e);
  const TrialContext ctx = prepare_trial(e, 0);
  for (const auto& row : r.trials.front()) EXPECT_DOUBLE_EQ(row.time_s, static_cast<double>(row.k) * ctx.frame_s);
}

TEST(Experiment, ClassificationReportsTestError) {
  ExperimentSpec e = tiny_spec();
  e.problem = ProblemKind::classification;
  e.samples = 40;
  e.iterations = 4;
  e.stride = 2;
  e.trials = 1;
  e.subcarriers = 901;
  e.dispersion_draws = 5;
  const ExperimentResult r = run_experiment(e);
  for (const auto& row : r.trials.front()) {
    EXPECT_GE(row.test_err, 0.0);
    EXPECT_LE(row.test_err, 1.0);
  }
}

TEST(Experiment, BaselinesRun) {
  for (Algorithm a : {Algorithm::qdgd, Algorithm::local}) {
    ExperimentSpec e = tiny_spec();
    e.algorithm = a;
    e.trials = 2;
    const ExperimentResult r = run_experiment(e);
    EXPECT_EQ(r.aggregate.size(), 5u);
    for (const auto& row : r.aggregate) EXPECT_TRUE(std::isfinite(row.norm_err));
  }
}

TEST(Verify, ReportFormat) {
  std::ostringstream out;
  print_result(out, {"codec", "max error", 1e-16, 1e-12, true, ""});
  const std::string line = out.str();
  for (const char* field : {"suite=codec", "statistic=", "value=", "threshold=", "verdict=PASS"})
    EXPECT_NE(line.find(field), std::string::npos) << field;
}

TEST(Verify, UnknownSuiteThrows) {
  EXPECT_THROW(run_suites({"nope"}, VerifyOptions{}), Error);
}

TEST(Verify, CorruptedNoiseFailsUnbiasedness) {
  VerifyOptions opt;
  opt.frames = 20000;
  const auto clean = run_suites({"unbiasedness"}, opt);
  EXPECT_TRUE(clean.front().pass) << clean.front().value;
  opt.noise_mismatch = 2.0;
  const auto faulty = run_suites({"unbiasedness"}, opt);
  EXPECT_FALSE(faulty.front().pass) << faulty.front().value;
}

TEST(Verify, QuickSuitesPass) {
  for (const auto& r : run_suites({"energy", "ptx", "codec", "laplacian", "frame"}, VerifyOptions{})) EXPECT_TRUE(r.pass) << r.name;
}
