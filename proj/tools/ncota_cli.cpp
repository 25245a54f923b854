#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ncota/experiment.hpp"
#include "ncota/theory.hpp"
#include "ncota/verify.hpp"

namespace {

using namespace ncota;

struct Flags {
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<std::uint64_t> stride;
  std::optional<int> threads;
  bool pin_deployment = false;
  std::string out;
};

Config load_with_flags(const std::string& path, const Flags& f) {
  Config cfg = Config::load(path);
  if (f.seed) cfg.set("experiment", "seed", std::to_string(*f.seed));
  if (f.trials) cfg.set("experiment", "trials", std::to_string(*f.trials));
  if (f.stride) cfg.set("experiment", "stride", std::to_string(*f.stride));
  if (f.threads) cfg.set("experiment", "threads", std::to_string(*f.threads));
  if (f.pin_deployment) cfg.set("experiment", "pin_deployment", "true");
  return cfg;
}

std::string aggregate_path(const std::string& out) {
  const auto dot = out.rfind('.');
  const auto slash = out.find_last_of('/');
  const bool has_ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
  return (has_ext ? out.substr(0, dot) : out) + "_aggregate.csv";
}

/// Output stream for --out, or stdout.
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw Error("cannot open output file '" + path + "'");
    }
  }
  std::ostream& get() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

void log_spec(const ExperimentSpec& e) {
  for (const auto& line : e.log) std::cerr << "# " << line << '\n';
}

int cmd_run(const std::string& path, const Flags& flags) {
  const ExperimentSpec e = spec_from_config(load_with_flags(path, flags));
  log_spec(e);
  const ExperimentResult r = run_experiment(e);
  Sink sink(flags.out);
  write_csv(sink.get(), r);
  if (!flags.out.empty()) {
    std::ofstream agg(aggregate_path(flags.out));
    if (!agg) throw Error("cannot open aggregate file '" + aggregate_path(flags.out) + "'");
    write_aggregate_csv(agg, r);
  }
  return 0;
}

int cmd_sweep(const std::string& path, const std::string& param, const std::string& values, const Flags& flags) {
  const Config base = load_with_flags(path, flags);
  std::vector<std::string> list;
  std::stringstream ss(values);
  for (std::string v; std::getline(ss, v, ',');)
    if (!v.empty()) list.push_back(v);
  if (list.empty()) throw Error("sweep: no values given");
  Sink sink(flags.out);
  auto& out = sink.get();
  out << std::setprecision(17) << "value,k,time_s,norm_err,subopt_gap,test_err\n";
  for (const auto& v : list) {
    Config cfg = base;
    cfg.set_path(param, v);
    const ExperimentSpec e = spec_from_config(cfg);
    std::cerr << "# " << param << " = " << v << '\n';
    log_spec(e);
    const ExperimentResult r = run_experiment(e);
    for (const auto& row : r.aggregate) {
      out << v << ',';
      write_row(out, row, false);
    }
  }
  return 0;
}

int cmd_bound(const std::string& path, const Flags& flags) {
  const ExperimentSpec e = spec_from_config(load_with_flags(path, flags));
  log_spec(e);
  if (e.algorithm != Algorithm::ncota) throw Error("bound: only defined for algorithm = ncota");
  const TrialContext ctx = prepare_trial(e, 0);
  const TheoryConstants c = theory_constants(e, ctx);
  const StepsizeSchedule& s = ctx.schedule;
  Sink sink(flags.out);
  auto& out = sink.get();
  out << std::setprecision(10);
  out << "# mu=" << c.mu << "\n# L=" << c.smoothness << "\n# rho2=" << c.rho2 << "\n# rhoN=" << c.rhoN << "\n# Lambda*=" << c.max_degree
      << "\n# theta=" << c.theta << "\n# varpi=" << c.varpi << "\n# p_tx=" << c.p_tx << "\n# sigma1=" << c.sigma1 << "\n# sigma2=" << c.sigma2
      << "\n# grad*=" << c.grad_star << "\n# zeta=" << c.zeta << "\n# dm=" << c.diameter << "\n# eta0=" << s.eta0 << "\n# gamma0=" << s.gamma0
      << "\n# delta=" << s.delta << '\n';
  if (s.mode != StepsizeMode::decreasing) throw Error("bound: the closed-form curves need the decreasing schedule");
  const std::uint64_t kbar = kappa_bar(c, s);
  out << "# kappa_bar=" << kbar << '\n';
  out << "k,B1,B2,B3,total\n";
  std::vector<std::uint64_t> ks{kbar};
  for (std::uint64_t k = (kbar / e.stride + 1) * e.stride; k <= std::max(e.iterations, kbar); k += e.stride) ks.push_back(k);
  for (auto k : ks) {
    const BoundTerms b = theorem2_bounds(c, s.eta0, s.gamma0, s.delta, kbar, k);
    out << k << ',' << b.b1 << ',' << b.b2 << ',' << b.b3 << ',' << b.total() << '\n';
  }
  return 0;
}

int cmd_verify(const std::vector<std::string>& suites, const Flags& flags, double mismatch) {
  VerifyOptions opt;
  if (flags.seed) opt.seed = *flags.seed;
  if (flags.trials) opt.rate_trials = *flags.trials;
  opt.noise_mismatch = mismatch;
  Sink sink(flags.out);
  bool ok = true;
  run_suites(suites, opt, [&](const SuiteResult& r) {
    print_result(sink.get(), r);
    sink.get().flush();
    ok = ok && r.pass;
  });
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Over-the-air decentralized gradient descent simulator"};
  app.require_subcommand(1);
  Flags flags;
  std::uint64_t seed = 0;
  int trials = 0;
  std::uint64_t stride = 0;
  int threads = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--trials", trials, "number of trials");
    sub->add_option("--out", flags.out, "output path (default: stdout)");
    sub->add_option("--stride", stride, "metrics sampling stride");
    sub->add_option("--threads", threads, "worker threads for trials");
    sub->add_flag("--pin-deployment", flags.pin_deployment, "reuse trial 0's deployment for every trial");
  };

  std::string config;
  auto* run = app.add_subcommand("run", "run an experiment and write per-trial metrics as CSV");
  run->add_option("config", config, "config file")->required();
  add_common(run);

  std::string param, values;
  auto* sweep = app.add_subcommand("sweep", "run one experiment per value of section.key; writes across-trial means");
  sweep->add_option("config", config, "config file")->required();
  sweep->add_option("param", param, "parameter as section.key")->required();
  sweep->add_option("values", values, "comma-separated values")->required();
  add_common(sweep);

  double theta = 0, varpi = 0, ratio = 0;
  double M = 0, Q = 0;
  auto* ptx = app.add_subcommand("ptx-solve", "print the variance-optimal transmit probability");
  ptx->add_option("theta", theta)->required();
  ptx->add_option("varpi", varpi)->required();
  ptx->add_option("M", M)->required();
  ptx->add_option("Q", Q)->required();
  ptx->add_option("noise_ratio", ratio, "N0 / (Lambda* E)")->required();

  auto* bound = app.add_subcommand("bound", "print the bound constants and decreasing-stepsize error curves");
  bound->add_option("config", config, "config file")->required();
  add_common(bound);

  std::vector<std::string> suites;
  double mismatch = 1.0;
  auto* verify = app.add_subcommand("verify", "run acceptance suites (all when none named)");
  verify->add_option("suite", suites, "suite names");
  verify->add_option("--noise-mismatch", mismatch, "receivers assume N0 scaled by this factor");
  add_common(verify);

  CLI11_PARSE(app, argc, argv);
  for (auto* sub : {run, sweep, bound, verify}) {
    if (!sub->parsed()) continue;
    if (sub->count("--seed")) flags.seed = seed;
    if (sub->count("--trials")) flags.trials = trials;
    if (sub->count("--stride")) flags.stride = stride;
    if (sub->count("--threads")) flags.threads = threads;
  }

  try {
    if (run->parsed()) return cmd_run(config, flags);
    if (sweep->parsed()) return cmd_sweep(config, param, values, flags);
    if (bound->parsed()) return cmd_bound(config, flags);
    if (verify->parsed()) return cmd_verify(suites, flags, mismatch);
    if (ptx->parsed()) {
      std::cout << std::setprecision(17) << solve_ptx(PtxInputs{theta, varpi, M, Q, ratio}) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
