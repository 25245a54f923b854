#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ncota/baselines.hpp"
#include "ncota/channel.hpp"
#include "ncota/codec.hpp"
#include "ncota/config.hpp"
#include "ncota/core.hpp"
#include "ncota/frame.hpp"
#include "ncota/metrics.hpp"
#include "ncota/optimizer.hpp"
#include "ncota/problems.hpp"
#include "ncota/random.hpp"
#include "ncota/theory.hpp"

namespace ncota {

enum class Algorithm { ncota, qdgd, local };
enum class ProblemKind { linreg, classification };

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

struct ExperimentSpec {
  Algorithm algorithm = Algorithm::ncota;
  std::uint64_t iterations = 1000;
  int trials = 20;
  std::uint64_t seed = 1;
  std::uint64_t stride = 50;
  bool pin_deployment = false;
  int threads = 0;  // 0: one per hardware thread

  int nodes = 10;
  double region_radius = 2000.0;
  std::string deployment_file;

  Propagation propagation = Propagation::rayleigh;
  Fading fading = Fading::iid;
  double coherence_s = 2e-3;
  double carrier_hz = 3e9;
  double bandwidth_hz = 5e6;
  double gain_min = 1.0;  // Rayleigh Lambda_ij ~ U[gain_min, gain_max]
  double gain_max = 1.0;

  int symbols = 1;
  int subcarriers = 16;
  int cyclic_prefix = 0;
  double energy = 1.0;
  double noise = 0.1;
  std::optional<double> p_tx;  // empty: solve the variance-optimal root
  double phi = 0.0;
  bool phi_max = false;
  bool shifts = true;
  int dispersion_draws = 200;

  ProblemKind problem = ProblemKind::linreg;
  LinregSpec linreg;
  double ce_mu = 0.001;
  LabelLayout labels = LabelLayout::iid;
  int samples = 1000;
  double spread = 0.5;
  std::string features_file;
  std::string test_file;
  int batch = 0;  // 0: full batch
  bool batch_auto = false;
  double grad_time_s = 30e-6;
  std::optional<double> radius;

  StepsizeMode mode = StepsizeMode::decreasing;
  std::optional<double> eta0;
  std::optional<double> gamma0;
  std::optional<double> delta;

  QuantizerKind quantizer = QuantizerKind::lpq;
  int bits = 4;
  int repetitions = 10;
  int block = 16;  // SC_n
  double q_eta = 0.05;
  double q_gamma = 0.1;

  std::vector<std::string> log;  // unit conversions, for the run log
};

inline const std::map<std::string, std::vector<std::string>>& config_schema() {
  static const std::map<std::string, std::vector<std::string>> schema = {
      {"experiment", {"algorithm", "iterations", "trials", "seed", "stride", "pin_deployment", "threads"}},
      {"network", {"nodes", "radius_m", "deployment_file"}},
      {"channel", {"model", "fading", "coherence_ms", "carrier_ghz", "bandwidth_mhz", "gain", "gain_min", "gain_max"}},
      {"phy", {"symbols", "subcarriers", "cyclic_prefix", "energy", "noise", "tx_power_dbm", "noise_psd_dbm_hz", "ptx", "phi", "shifts",
               "dispersion_draws"}},
      {"problem", {"kind", "dim", "mu", "smoothness", "heterogeneity", "noise", "labels", "samples", "spread", "features_file", "test_file",
                   "batch", "grad_time_us", "radius"}},
      {"stepsize", {"mode", "eta0", "gamma0", "delta"}},
      {"baseline", {"quantizer", "bits", "repetitions", "block", "eta", "gamma"}},
  };
  return schema;
}

namespace detail {
inline std::optional<double> number_or_word(const Config& c, const std::string& s, const std::string& k, const std::string& word) {
  if (!c.has(s, k) || c.text(s, k, "") == word) return std::nullopt;
  return c.number(s, k, 0.0);
}
}  // namespace detail

inline ExperimentSpec spec_from_config(const Config& c) {
  c.check_keys(config_schema());
  ExperimentSpec e;
  auto fail = [&](const std::string& s, const std::string& k, const std::string& what) { return c.error_at(s, k, what); };

  const auto algo = c.choice("experiment", "algorithm", {"ncota", "qdgd", "local"}, "ncota");
  e.algorithm = algo == "qdgd" ? Algorithm::qdgd : algo == "local" ? Algorithm::local : Algorithm::ncota;
  const auto iterations = c.integer("experiment", "iterations", 1000);
  if (iterations < 0) throw fail("experiment", "iterations", "must be nonnegative");
  e.iterations = static_cast<std::uint64_t>(iterations);
  e.trials = static_cast<int>(c.integer("experiment", "trials", 20));
  if (e.trials < 1) throw fail("experiment", "trials", "must be at least 1");
  e.seed = static_cast<std::uint64_t>(c.integer("experiment", "seed", 1));
  const auto stride = c.integer("experiment", "stride", 50);
  if (stride < 1) throw fail("experiment", "stride", "must be at least 1");
  e.stride = static_cast<std::uint64_t>(stride);
  e.pin_deployment = c.flag("experiment", "pin_deployment", false);
  e.threads = static_cast<int>(c.integer("experiment", "threads", 0));
  if (e.threads < 0) throw fail("experiment", "threads", "must be nonnegative");

  e.nodes = static_cast<int>(c.integer("network", "nodes", 10));
  if (e.nodes < 2) throw fail("network", "nodes", "need at least 2 nodes");
  e.region_radius = c.number("network", "radius_m", 2000.0);
  if (e.region_radius <= 0.0) throw fail("network", "radius_m", "must be positive");
  e.deployment_file = c.text("network", "deployment_file", "");

  e.propagation = c.choice("channel", "model", {"rayleigh", "reflector"}, "rayleigh") == "reflector" ? Propagation::reflector : Propagation::rayleigh;
  const auto fading = c.choice("channel", "fading", {"iid", "block", "static"}, "iid");
  e.fading = fading == "block" ? Fading::block : fading == "static" ? Fading::fixed : Fading::iid;
  e.coherence_s = c.number("channel", "coherence_ms", 2.0) * 1e-3;
  if (e.coherence_s <= 0.0) throw fail("channel", "coherence_ms", "must be positive");
  e.carrier_hz = c.number("channel", "carrier_ghz", 3.0) * 1e9;
  if (e.carrier_hz <= 0.0) throw fail("channel", "carrier_ghz", "must be positive");
  e.bandwidth_hz = c.number("channel", "bandwidth_mhz", 5.0) * 1e6;
  if (e.bandwidth_hz <= 0.0) throw fail("channel", "bandwidth_mhz", "must be positive");
  if (c.has("channel", "gain") && (c.has("channel", "gain_min") || c.has("channel", "gain_max")))
    throw fail("channel", "gain", "give either gain or gain_min/gain_max, not both");
  e.gain_min = c.number("channel", "gain_min", c.number("channel", "gain", 1.0));
  e.gain_max = c.number("channel", "gain_max", c.number("channel", "gain", 1.0));
  if (e.gain_min <= 0.0) throw fail("channel", c.has("channel", "gain") ? "gain" : "gain_min", "must be positive");
  if (e.gain_max < e.gain_min) throw fail("channel", "gain_max", "must be at least gain_min");

  e.symbols = static_cast<int>(c.integer("phy", "symbols", 1));
  e.subcarriers = static_cast<int>(c.integer("phy", "subcarriers", 16));
  e.cyclic_prefix = static_cast<int>(c.integer("phy", "cyclic_prefix", 0));
  if (e.symbols < 1) throw fail("phy", "symbols", "must be at least 1");
  if (e.subcarriers < 1) throw fail("phy", "subcarriers", "must be at least 1");
  if (e.cyclic_prefix < 0) throw fail("phy", "cyclic_prefix", "must be nonnegative");
  if (c.has("phy", "energy") && c.has("phy", "tx_power_dbm")) throw fail("phy", "tx_power_dbm", "give either energy or tx_power_dbm");
  if (c.has("phy", "noise") && c.has("phy", "noise_psd_dbm_hz")) throw fail("phy", "noise_psd_dbm_hz", "give either noise or noise_psd_dbm_hz");
  if (c.has("phy", "tx_power_dbm")) {
    const double dbm = c.number("phy", "tx_power_dbm", 0.0);
    e.energy = dbm_to_watts(dbm) / e.bandwidth_hz;
    std::ostringstream msg;
    msg << "energy per sample E = " << dbm << " dBm / " << e.bandwidth_hz * 1e-6 << " MHz = " << e.energy << " J";
    e.log.push_back(msg.str());
  } else {
    e.energy = c.number("phy", "energy", 1.0);
  }
  if (!(e.energy > 0.0)) throw fail("phy", "energy", "must be positive");
  if (c.has("phy", "noise_psd_dbm_hz")) {
    const double dbm = c.number("phy", "noise_psd_dbm_hz", 0.0);
    e.noise = dbm_to_watts(dbm);
    std::ostringstream msg;
    msg << "noise N0 = " << dbm << " dBm/Hz = " << e.noise << " W/Hz";
    e.log.push_back(msg.str());
  } else {
    e.noise = c.number("phy", "noise", 0.1);
  }
  if (e.noise < 0.0) throw fail("phy", "noise", "must be nonnegative");
  e.p_tx = detail::number_or_word(c, "phy", "ptx", "lemma");
  if (e.p_tx && !(*e.p_tx > 0.0 && *e.p_tx < 1.0)) throw fail("phy", "ptx", "must lie in (0, 1) or be 'lemma'");
  e.phi_max = c.text("phy", "phi", "") == "max";
  if (!e.phi_max) e.phi = c.number("phy", "phi", 0.0);
  if (e.phi < 0.0 || e.phi > 1.0) throw fail("phy", "phi", "must lie in [0, 1] or be 'max'");
  e.shifts = c.flag("phy", "shifts", true);
  e.dispersion_draws = static_cast<int>(c.integer("phy", "dispersion_draws", 200));
  if (e.dispersion_draws < 1) throw fail("phy", "dispersion_draws", "must be at least 1");

  e.problem = c.choice("problem", "kind", {"linreg", "classification"}, "linreg") == "classification" ? ProblemKind::classification : ProblemKind::linreg;
  if (e.problem == ProblemKind::linreg) {
    e.linreg.nodes = e.nodes;
    e.linreg.dim = c.integer("problem", "dim", 5);
    if (e.linreg.dim < 1) throw fail("problem", "dim", "must be at least 1");
    e.linreg.mu = c.number("problem", "mu", 1.0);
    e.linreg.smoothness = c.number("problem", "smoothness", 3.0);
    if (e.linreg.mu <= 0.0) throw fail("problem", "mu", "must be positive");
    if (e.linreg.smoothness < e.linreg.mu) throw fail("problem", "smoothness", "must be at least mu");
    e.linreg.heterogeneity = c.number("problem", "heterogeneity", 0.05);
    e.linreg.noise = c.number("problem", "noise", 0.0);
    for (const char* k : {"labels", "samples", "spread", "features_file", "test_file"})
      if (c.has("problem", k)) throw fail("problem", k, "only applies to kind = classification");
  } else {
    if (c.has("problem", "dim")) throw fail("problem", "dim", "classification has a fixed dimension of 450");
    for (const char* k : {"smoothness", "heterogeneity", "noise"})
      if (c.has("problem", k)) throw fail("problem", k, "only applies to kind = linreg");
    e.ce_mu = c.number("problem", "mu", 0.001);
    if (e.ce_mu <= 0.0) throw fail("problem", "mu", "must be positive");
    e.labels = c.choice("problem", "labels", {"iid", "spatial"}, "iid") == "spatial" ? LabelLayout::spatial : LabelLayout::iid;
    e.samples = static_cast<int>(c.integer("problem", "samples", 1000));
    if (e.samples < kClasses) throw fail("problem", "samples", "need at least one sample per class");
    e.spread = c.number("problem", "spread", 0.5);
    if (e.spread < 0.0) throw fail("problem", "spread", "must be nonnegative");
    e.features_file = c.text("problem", "features_file", "");
    e.test_file = c.text("problem", "test_file", "");
  }
  const auto batch = c.text("problem", "batch", "full");
  if (batch == "auto") {
    e.batch_auto = true;
  } else if (batch != "full") {
    e.batch = static_cast<int>(c.integer("problem", "batch", 0));
    if (e.batch < 1) throw fail("problem", "batch", "must be 'full', 'auto' or a positive integer");
  }
  e.grad_time_s = c.number("problem", "grad_time_us", 30.0) * 1e-6;
  if (e.grad_time_s <= 0.0) throw fail("problem", "grad_time_us", "must be positive");
  e.radius = detail::number_or_word(c, "problem", "radius", "auto");
  if (e.radius && *e.radius <= 0.0) throw fail("problem", "radius", "must be positive or 'auto'");

  e.mode = c.choice("stepsize", "mode", {"decreasing", "constant"}, "decreasing") == "constant" ? StepsizeMode::constant : StepsizeMode::decreasing;
  e.eta0 = detail::number_or_word(c, "stepsize", "eta0", "baseline");
  e.gamma0 = detail::number_or_word(c, "stepsize", "gamma0", "baseline");
  e.delta = detail::number_or_word(c, "stepsize", "delta", "baseline");
  if (e.eta0 && *e.eta0 <= 0.0) throw fail("stepsize", "eta0", "must be positive");
  if (e.gamma0 && *e.gamma0 < 0.0) throw fail("stepsize", "gamma0", "must be nonnegative");
  if (e.delta && *e.delta < 0.0) throw fail("stepsize", "delta", "must be nonnegative");

  const auto quant = c.choice("baseline", "quantizer", {"lpq", "vq", "exact"}, "lpq");
  e.quantizer = quant == "vq" ? QuantizerKind::vq : quant == "exact" ? QuantizerKind::exact : QuantizerKind::lpq;
  e.bits = static_cast<int>(c.integer("baseline", "bits", 4));
  if (e.bits < 1 || e.bits > 52) throw fail("baseline", "bits", "must lie in 1..52");
  e.repetitions = static_cast<int>(c.integer("baseline", "repetitions", 10));
  if (e.repetitions < 1) throw fail("baseline", "repetitions", "must be at least 1");
  e.block = static_cast<int>(c.integer("baseline", "block", e.subcarriers));
  if (e.block < 1 || e.subcarriers % e.block != 0) throw fail("baseline", "block", "must divide [phy] subcarriers");
  e.q_eta = c.number("baseline", "eta", 0.05);
  e.q_gamma = c.number("baseline", "gamma", 0.1);
  if (e.q_eta <= 0.0) throw fail("baseline", "eta", "must be positive");
  if (e.q_gamma < 0.0) throw fail("baseline", "gamma", "must be nonnegative");

  const int M = e.problem == ProblemKind::linreg ? static_cast<int>(2 * e.linreg.dim + 1) : static_cast<int>(2 * kCeDim + 1);
  if (e.algorithm == Algorithm::ncota && e.symbols * e.subcarriers < M)
    throw fail("phy", "symbols", "frame has " + std::to_string(e.symbols * e.subcarriers) + " resource units but the codebook needs M = " +
                                     std::to_string(M));
  return e;
}

// ---------------------------------------------------------------------------
// Per-trial instance.

struct TrialContext {
  std::shared_ptr<const LocalObjectives> problem;
  std::shared_ptr<const LabeledDataset> test_set;
  ModelVector wstar;
  ParamDomain domain;
  Codebook codebook;
  FramePlan plan;  // NCOTA frame, or the OFDMA grid for QDGD
  OfdmaPlan ofdma;
  ChannelSpec channel;
  GainLaplacian graph;
  double frame_s = 0.0;
  int batch = 0;
  StepsizeSchedule schedule;
  double p_tx = 0.5;
  Deployment deployment;
};

namespace detail {
inline LabeledDataset load_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open feature file '" + path + "'");
  return load_features(in);
}
}  // namespace detail

/// Trial-invariant data (datasets, linear-regression instance) come from the
/// master seed; deployment, gains and label placement follow the trial unless pinned.
inline TrialContext prepare_trial(const ExperimentSpec& e, int trial) {
  TrialContext ctx;
  const SeedSpec fixed{e.seed, 0};
  const SeedSpec placement{e.seed, e.pin_deployment ? 0 : static_cast<std::uint64_t>(trial)};

  if (!e.deployment_file.empty()) {
    std::ifstream in(e.deployment_file);
    if (!in) throw Error("cannot open deployment file '" + e.deployment_file + "'");
    ctx.deployment = read_deployment(in, e.region_radius);
    require(ctx.deployment.size() == e.nodes, "deployment file has " + std::to_string(ctx.deployment.size()) + " nodes, config says " +
                                                  std::to_string(e.nodes));
  } else {
    Stream s = placement.stream(0, kSharedNode, Purpose::deployment);
    ctx.deployment = deploy_uniform_disc(e.nodes, e.region_radius, s);
  }

  if (e.problem == ProblemKind::linreg) {
    Stream s = fixed.stream(0, kSharedNode, Purpose::data);
    ctx.problem = std::make_shared<LinearRegression>(make_synthetic_linreg(e.linreg, s));
  } else {
    std::shared_ptr<LabeledDataset> train;
    if (!e.features_file.empty()) {
      train = std::make_shared<LabeledDataset>(detail::load_dataset_file(e.features_file));
      ctx.test_set = e.test_file.empty() ? train : std::make_shared<LabeledDataset>(detail::load_dataset_file(e.test_file));
    } else {
      Stream means = fixed.stream(0, kSharedNode, Purpose::data);
      Stream draws = fixed.stream(1, kSharedNode, Purpose::data);
      Stream test_draws = fixed.stream(2, kSharedNode, Purpose::data);
      Stream test_means = fixed.stream(0, kSharedNode, Purpose::data);
      train = std::make_shared<LabeledDataset>(make_synthetic_classification(e.samples / kClasses, e.spread, means, draws));
      ctx.test_set = std::make_shared<LabeledDataset>(make_synthetic_classification(e.samples / kClasses, e.spread, test_means, test_draws));
    }
    Stream ls = placement.stream(0, kSharedNode, Purpose::labels);
    const auto node_labels = deploy_labels(e.nodes, &ctx.deployment, e.labels, ls);
    ctx.problem = std::make_shared<CrossEntropy>(train, assign_samples(*train, node_labels), e.ce_mu);
  }
  const LocalObjectives& f = *ctx.problem;

  ctx.wstar = compute_wstar(f);
  const double r = e.radius ? *e.radius : compute_radius(f);
  if (!(r > 0.0)) throw Error("parameter radius ||grad F(0)|| / mu is zero: the problem is degenerate");
  ctx.domain = ParamDomain(f.dim(), r);
  ctx.codebook = build_cp_codebook(f.dim(), r);

  if (e.algorithm == Algorithm::qdgd) {
    ctx.ofdma = make_ofdma_plan(e.nodes, e.subcarriers, e.cyclic_prefix, e.block);
    ctx.plan = ctx.ofdma.grid;
    ctx.frame_s = ofdma_frame_duration(e.nodes, e.subcarriers, e.cyclic_prefix, e.block, e.bandwidth_hz);
  } else {
    ctx.plan = make_frame_plan(e.symbols, e.subcarriers, e.cyclic_prefix, ctx.codebook.size());
    ctx.frame_s = frame_duration(ctx.plan, e.bandwidth_hz);
  }

  ctx.channel.propagation = e.propagation;
  ctx.channel.fading = e.fading;
  ctx.channel.coherence_s = e.coherence_s;
  ctx.channel.frame_s = ctx.frame_s;
  ctx.channel.carrier_hz = e.carrier_hz;
  ctx.channel.bandwidth_hz = e.bandwidth_hz;
  ctx.channel.deployment = ctx.deployment;
  if (e.propagation == Propagation::rayleigh) {
    Stream gs = placement.stream(0, kSharedNode, Purpose::gains);
    Matrix g = Matrix::Zero(e.nodes, e.nodes);
    for (int i = 0; i < e.nodes; ++i)
      for (int j = i + 1; j < e.nodes; ++j) g(i, j) = g(j, i) = e.gain_min + (e.gain_max - e.gain_min) * gs.uniform();
    ctx.channel.mean_gains = g;
  }
  ctx.graph = average_gain_laplacian(ctx.channel, ctx.plan, SeedSpec{e.seed, static_cast<std::uint64_t>(trial)});

  ctx.batch = e.batch_auto ? std::max(1, static_cast<int>(std::floor(ctx.frame_s / e.grad_time_s + 1e-9))) : e.batch;

  const StepsizeSchedule base = baseline_schedule(f.mu(), f.smoothness(), ctx.graph.rho2);
  ctx.schedule.mode = e.mode;
  ctx.schedule.eta0 = e.eta0.value_or(base.eta0);
  ctx.schedule.gamma0 = e.gamma0.value_or(base.gamma0);
  ctx.schedule.delta = e.mode == StepsizeMode::constant ? 0.0 : e.delta.value_or(0.8 * f.mu() * ctx.schedule.eta0);

  if (e.p_tx) {
    ctx.p_tx = *e.p_tx;
  } else if (e.algorithm == Algorithm::ncota) {
    const int M = ctx.plan.components;
    const int Q = ctx.plan.resource_units();
    ctx.p_tx = solve_ptx(1.0, std::sqrt(static_cast<double>(M) / Q), M, Q, e.noise, e.energy, ctx.graph.max_degree);
  }
  return ctx;
}

inline NcotaConfig ncota_config(const ExperimentSpec& e, const TrialContext& ctx) {
  NcotaConfig cfg;
  cfg.problem = ctx.problem.get();
  cfg.domain = ctx.domain;
  cfg.codebook = ctx.codebook;
  cfg.plan = ctx.plan;
  cfg.channel = ctx.channel;
  cfg.energy = e.energy;
  cfg.noise = e.noise;
  cfg.p_tx = ctx.p_tx;
  cfg.phi = e.phi;
  cfg.phi_max = e.phi_max;
  cfg.shifts = e.shifts;
  cfg.batch = ctx.batch;
  cfg.schedule = ctx.schedule;
  return cfg;
}

inline QdgdConfig qdgd_config(const ExperimentSpec& e, const TrialContext& ctx) {
  QdgdConfig cfg;
  cfg.problem = ctx.problem.get();
  cfg.domain = ctx.domain;
  cfg.codebook = ctx.codebook;
  cfg.quantizer = e.quantizer;
  cfg.bits = e.bits;
  cfg.repetitions = e.repetitions;
  cfg.ofdma = ctx.ofdma;
  cfg.channel = ctx.channel;
  cfg.energy = e.energy;
  cfg.noise = e.noise;
  cfg.eta = e.q_eta;
  cfg.gamma = e.q_gamma;
  cfg.batch = ctx.batch;
  return cfg;
}

/// Constants entering the bounds, all computed from ground truth.
inline TheoryConstants theory_constants(const ExperimentSpec& e, const TrialContext& ctx, int trial = 0) {
  const LocalObjectives& f = *ctx.problem;
  TheoryConstants c;
  c.mu = f.mu();
  c.smoothness = f.smoothness();
  c.rho2 = ctx.graph.rho2;
  c.rhoN = ctx.graph.rhoN;
  c.max_degree = ctx.graph.max_degree;
  const Dispersion disp = channel_dispersion(ctx.channel, ctx.plan, SeedSpec{e.seed, static_cast<std::uint64_t>(trial)}, ctx.graph.gains,
                                             e.dispersion_draws);
  c.theta = disp.theta;
  c.varpi = disp.varpi;
  c.nodes = f.nodes();
  c.components = ctx.plan.components;
  c.units = ctx.plan.resource_units();
  c.energy = e.energy;
  c.noise = e.noise;
  c.p_tx = ctx.p_tx;
  c.diameter = ctx.domain.diameter();
  c.grad_star = node_gradient_spread(f, ctx.wstar);
  c.zeta = ctx.domain.radius - ctx.wstar.norm();
  require(c.zeta >= 0.0, "theory_constants: w* lies outside the parameter ball");
  c.sigma1 = sigma1_bound(c, ctx.codebook);
  int largest = 0;
  for (int i = 0; i < f.nodes(); ++i) largest = std::max(largest, f.sample_count(i));
  const bool full = ctx.batch <= 0 || ctx.batch >= largest;
  c.sigma2 = full ? 0.0 : sigma2_bound(largest, ctx.batch, sample_gradient_spread(f, ctx.wstar), f.smoothness(), c.diameter);
  return c;
}

// ---------------------------------------------------------------------------
// Runs and CSV output.

struct MetricsRow {
  int trial = 0;
  std::uint64_t k = 0;
  double time_s = 0.0;
  double norm_err = 0.0;
  double subopt_gap = 0.0;
  double test_err = std::numeric_limits<double>::quiet_NaN();
};

using StepFn = std::function<std::vector<ModelVector>(std::span<const ModelVector>, std::uint64_t)>;

inline StepFn make_step(const ExperimentSpec& e, const TrialContext& ctx, int trial) {
  const SeedSpec seed{e.seed, static_cast<std::uint64_t>(trial)};
  switch (e.algorithm) {
    case Algorithm::ncota: {
      auto cfg = std::make_shared<NcotaConfig>(ncota_config(e, ctx));
      cfg->validate();
      return [cfg, seed](std::span<const ModelVector> w, std::uint64_t k) { return iterate(w, *cfg, k, seed).states; };
    }
    case Algorithm::qdgd: {
      auto cfg = std::make_shared<QdgdConfig>(qdgd_config(e, ctx));
      return [cfg, seed](std::span<const ModelVector> w, std::uint64_t k) { return qdgd_iterate(w, *cfg, k, seed).states; };
    }
    case Algorithm::local: {
      const auto* f = ctx.problem.get();
      const auto domain = ctx.domain;
      const auto schedule = ctx.schedule;
      const int batch = ctx.batch;
      return [f, domain, schedule, batch, seed](std::span<const ModelVector> w, std::uint64_t k) {
        return local_only_iterate(w, *f, domain, stepsizes(schedule, k).eta, batch, k, seed);
      };
    }
  }
  throw Error("unknown algorithm");
}

/// States are passed to `extra` at every sampled iteration, for callers that
/// need more than the CSV metrics.
inline std::vector<MetricsRow> run_trial(const ExperimentSpec& e, const TrialContext& ctx, int trial, const Observer& extra = {}) {
  std::vector<MetricsRow> rows;
  const LocalObjectives& f = *ctx.problem;
  const StepFn step = make_step(e, ctx, trial);
  const double fstar = f.global_value(ctx.wstar);
  run_iterations(f.nodes(), f.dim(), e.iterations, e.stride, step, [&](std::uint64_t k, std::span<const ModelVector> states) {
    MetricsRow row;
    row.trial = trial;
    row.k = k;
    row.time_s = static_cast<double>(k) * ctx.frame_s;
    row.norm_err = normalized_error(states, ctx.wstar);
    const ModelVector mean = average(states);
    row.subopt_gap = f.global_value(mean) - fstar;
    if (ctx.test_set) row.test_err = test_error(mean, *ctx.test_set);
    rows.push_back(row);
    if (extra) extra(k, states);
  });
  return rows;
}

struct ExperimentResult {
  std::vector<std::vector<MetricsRow>> trials;
  std::vector<MetricsRow> aggregate;  // trial = -1
};

/// Arithmetic mean across trials at each sampled iteration.
inline std::vector<MetricsRow> aggregate_rows(const std::vector<std::vector<MetricsRow>>& trials) {
  std::vector<MetricsRow> out;
  if (trials.empty()) return out;
  for (std::size_t r = 0; r < trials.front().size(); ++r) {
    MetricsRow m = trials.front()[r];
    m.trial = -1;
    m.norm_err = m.subopt_gap = m.test_err = 0.0;
    for (const auto& t : trials) {
      require(t.size() == trials.front().size() && t[r].k == m.k, "aggregate: trials sampled at different iterations");
      m.norm_err += t[r].norm_err;
      m.subopt_gap += t[r].subopt_gap;
      m.test_err += t[r].test_err;
    }
    const double n = static_cast<double>(trials.size());
    m.norm_err /= n;
    m.subopt_gap /= n;
    m.test_err /= n;
    out.push_back(m);
  }
  return out;
}

/// Trials run on a pool of worker threads; rows are kept per trial so the
/// writer emits them in trial order.
inline ExperimentResult run_experiment(const ExperimentSpec& e) {
  ExperimentResult result;
  result.trials.resize(static_cast<std::size_t>(e.trials));
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int workers = std::min(e.trials, e.threads > 0 ? e.threads : static_cast<int>(hw));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (int t = next++; t < e.trials; t = next++) {
      try {
        const TrialContext ctx = prepare_trial(e, t);
        result.trials[static_cast<std::size_t>(t)] = run_trial(e, ctx, t);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = e.trials;
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  result.aggregate = aggregate_rows(result.trials);
  return result;
}

inline constexpr const char* kCsvHeader = "trial,k,time_s,norm_err,subopt_gap,test_err";

inline void write_row(std::ostream& out, const MetricsRow& r, bool with_trial = true) {
  if (with_trial) out << r.trial << ',';
  out << r.k << ',' << r.time_s << ',' << r.norm_err << ',' << r.subopt_gap << ',' << r.test_err << '\n';
}

inline void write_csv(std::ostream& out, const ExperimentResult& r) {
  out << std::setprecision(17) << kCsvHeader << '\n';
  for (const auto& trial : r.trials)
    for (const auto& row : trial) write_row(out, row);
}

inline void write_aggregate_csv(std::ostream& out, const ExperimentResult& r) {
  out << std::setprecision(17) << "k,time_s,norm_err,subopt_gap,test_err\n";
  for (const auto& row : r.aggregate) write_row(out, row, false);
}

}  // namespace ncota
