// Command-line harness for the SDDS library.
//
//   sdds run      CONFIG [key=value ...] [--jobs N]
//   sdds sweep    CONFIG [key=value ...] [--eps 0.4,0.2,0.1] [--jobs N]
//   sdds rrsim    CONFIG [key=value ...] [--jobs N]
//   sdds kappa    MATRIX [--tol 1e-3]
//   sdds validate CONFIG [key=value ...]
//   sdds verify   CONFIG [key=value ...] [--jobs N]
//
// Exit status: 0 when everything ran and every requested check passed,
// 1 when a check or validation failed, 2 on errors.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "sdds/experiment.hpp"

namespace {

constexpr int kExitFail = 1;
constexpr int kExitError = 2;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  unsigned jobs = 1;
};

void add_common(CLI::App* app, Common& c, bool with_jobs) {
  app->add_option("config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  app->add_option("overrides", c.overrides, "key=value overrides, dotted keys (sdds.tau=0.5)");
  if (with_jobs) app->add_option("-j,--jobs", c.jobs, "concurrent replications")->check(CLI::PositiveNumber);
}

int report_checks(const std::vector<sdds::CheckResult>& checks) {
  bool ok = true;
  for (const auto& c : checks) {
    std::cerr << (c.pass ? "PASS " : "FAIL ") << c.name << "\n";
    ok = ok && c.pass;
  }
  return ok ? 0 : kExitFail;
}

int do_run(const Common& c, const std::vector<double>& eps, bool sweep) {
  sdds::ExperimentConfig cfg = sdds::load_experiment(c.config, c.overrides);
  if (!eps.empty()) {
    std::vector<std::string> o = c.overrides;
    std::string list = "[";
    for (std::size_t i = 0; i < eps.size(); ++i) list += (i ? "," : "") + sdds::format_real(eps[i]);
    o.push_back("epsilons=" + list + "]");
    cfg = sdds::load_experiment(c.config, o);
  }
  if (sweep && cfg.epsilons.empty()) throw sdds::ConfigError("epsilons", "sweep needs an epsilon list");
  const sdds::RunSummary s = sdds::cmd_run(cfg, c.jobs);
  std::cout << s.document["stopping_times"].dump(2) << "\n";
  std::cerr << "wrote " << s.trace_files.size() << " trace(s) and summary.json to " << s.output_dir.string()
            << "\n";
  return report_checks(s.checks);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic directional direct search: runs, sweeps and theory checks"};
  app.require_subcommand(1);

  Common run_opts, sweep_opts, rr_opts, val_opts, ver_opts;
  std::vector<double> sweep_eps;
  auto* run = app.add_subcommand("run", "run replications, write traces and summary.json");
  add_common(run, run_opts, true);
  auto* sweep = app.add_subcommand("sweep", "run with an epsilon list (stopping times per epsilon)");
  add_common(sweep, sweep_opts, true);
  sweep->add_option("--eps", sweep_eps, "epsilon list, overrides the config")->delimiter(',')->allow_extra_args(false);
  auto* rr = app.add_subcommand("rrsim", "Monte Carlo of the renewal-reward process over a grid");
  add_common(rr, rr_opts, true);
  auto* val = app.add_subcommand("validate", "check the algorithm parameters");
  add_common(val, val_opts, false);
  auto* ver = app.add_subcommand("verify", "run the diagnostic check battery");
  add_common(ver, ver_opts, true);

  std::string matrix;
  double tol = sdds::kDefaultKappaTol;
  auto* kap = app.add_subcommand("kappa", "cosine measure of a direction set (one direction per row)");
  kap->add_option("matrix", matrix, "matrix file")->required()->check(CLI::ExistingFile);
  kap->add_option("--tol", tol, "interval width tolerance")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return do_run(run_opts, {}, false);
    if (*sweep) return do_run(sweep_opts, sweep_eps, true);
    if (*rr) {
      const auto cfg = sdds::load_experiment(rr_opts.config, rr_opts.overrides);
      const auto res = sdds::cmd_rrsim(cfg, rr_opts.jobs);
      std::cout << sdds::rrsim_to_csv(res.cells);
      std::cerr << "wrote " << res.csv_path.string() << "\n";
      return report_checks(res.checks);
    }
    if (*kap) {
      std::cout << sdds::cmd_kappa(matrix, tol).dump(2) << "\n";
      return 0;
    }
    if (*val) {
      const auto cfg = sdds::load_experiment(val_opts.config, val_opts.overrides);
      const auto j = sdds::cmd_validate(cfg);
      std::cout << j.dump(2) << "\n";
      return j["ok"].get<bool>() ? 0 : kExitFail;
    }
    if (*ver) {
      const auto cfg = sdds::load_experiment(ver_opts.config, ver_opts.overrides);
      const auto res = sdds::cmd_verify(cfg, ver_opts.jobs);
      std::cout << res.document.dump(2) << "\n";
      return report_checks(res.checks);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
