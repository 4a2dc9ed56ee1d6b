// Acceptance suite. `acceptance --criterion N` runs one criterion, no
// argument runs all of them. Each criterion prints one PASS/FAIL line with
// the measured quantities; the exit status is non-zero if any failed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "sdds/experiment.hpp"

using namespace sdds;
namespace fs = std::filesystem;

namespace {

struct Outcome_ {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) { return format_real(v); }

Vector v2(double a, double b) {
  Vector x(2);
  x << a, b;
  return x;
}

StochasticProblem noisy_sphere(double sigma) {
  ProblemSpec s;
  s.noise = sigma > 0 ? NoiseModel::gaussian(sigma) : NoiseModel::zero();
  return make_problem(s);
}

SddsConfig coordinate_config() {
  SddsConfig c;  // gamma 6, c 1, eps_f 0.1, tau 0.5, p 2, nu 0.6, beta 0.9
  c.poll_scheme = PollScheme::coordinate;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sdds_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Independent restatement of the three parameter inequalities.
bool direct_valid(double gamma, double p, double tau, double nu, double beta) {
  if (!(tau > 0 && std::pow(tau, p) < (gamma - 2) / (gamma + 2))) return false;
  const double r = nu / (1 - nu);
  if (!(r >= 2 * (std::pow(tau, -p) - 1) / (gamma - 2) * (1 - 1e-12))) return false;
  return beta / (1 - beta) >= r * 4 / (1 - std::pow(tau, p)) * (1 - 1e-12);
}

// 1. Parameter validity.
Outcome_ criterion_1() {
  const auto t0 = Clock::now();
  SddsConfig c;
  bool ok = true;
  const auto base = validate_config(c);
  ok = ok && base.ok && std::abs(base.tau_upper - std::sqrt(0.5)) < 1e-15;
  c.beta = 0.95;  // large enough that only the tau bound is in play below
  c.tau = 0.70;
  ok = ok && validate_config(c).ok;
  c.tau = 0.71;
  ok = ok && !validate_config(c).ok;
  c = SddsConfig{};
  c.nu = 0.5;
  ok = ok && !validate_config(c).ok;
  c.nu = 0.6;
  ok = ok && validate_config(c).ok;
  c.beta = 0.85;
  ok = ok && !validate_config(c).ok;
  c.beta = 0.9;
  ok = ok && validate_config(c).ok;
  const bool examples = ok;

  RandomStream rng(1);
  int agree = 0;
  for (int i = 0; i < 1000; ++i) {
    SddsConfig r;
    r.gamma = 2.0 + rng.uniform(0.01, 10);
    r.p = 1.0 + rng.uniform(0.01, 3);
    r.tau = rng.uniform(0.01, 0.99);
    r.nu = rng.uniform(0.01, 0.99);
    r.beta = rng.uniform(0.501, 0.999);
    agree += validate_config(r).ok == direct_valid(r.gamma, r.p, r.tau, r.nu, r.beta);
  }
  const double secs = seconds_since(t0);
  return {examples && agree == 1000 && secs < 1.0,
          "examples=" + std::string(examples ? "ok" : "FAILED") + " random_agree=" + std::to_string(agree) +
              "/1000 runtime_s=" + fmt(secs)};
}

// 2. Sufficient-decrease implications of accurate estimates, end to end.
Outcome_ criterion_2() {
  const auto p = noisy_sphere(0.05);
  SddsConfig c;  // rotated poll sets
  c.delta0 = 1.0;
  c.j_max = 0;
  const RandomStream base(2);
  DecreaseImplicationReport rep;
  const double deltas[] = {1.0, 0.5, 0.25};
  for (std::uint64_t i = 0; i < 10000; ++i) {
    RandomStream s = base.child({0, i});
    const Vector x = v2(s.uniform(-2, 2), s.uniform(-2, 2));
    const StepResult r = step(State{x, deltas[i % 3], static_cast<std::int64_t>(i)}, p, c, base.child({1, i}));
    accumulate_decrease_implications(p, c, r, rep);
  }
  return {rep.ok() && rep.steps >= 10000 && rep.good_success > 0 && rep.good_failure > 0,
          "steps=" + std::to_string(rep.steps) + " pairs=" + std::to_string(rep.pairs) +
              " joint_good=" + std::to_string(rep.joint_good) + " good_success=" + std::to_string(rep.good_success) +
              " good_failure=" + std::to_string(rep.good_failure) +
              " success_violations=" + std::to_string(rep.success_violations) +
              " failure_violations=" + std::to_string(rep.failure_violations)};
}

// 3. Noiseless steps below delta_eps' succeed away from small gradients.
Outcome_ criterion_3() {
  const auto t0 = Clock::now();
  const auto p = noisy_sphere(0.0);
  std::size_t states = 0, eligible = 0, successes = 0;
  for (PollScheme scheme : {PollScheme::coordinate, PollScheme::rotated}) {
    SddsConfig c = coordinate_config();
    c.poll_scheme = scheme;
    const TheoryConstants t = make_theory_constants(c, p);
    for (double eps_prime : {0.1, 0.3, 0.6, 0.9}) {
      std::vector<DriftState> grid;
      const double de = t.delta_eps_prime(eps_prime);
      for (int m = 0; m < 5; ++m)
        for (double radius : {1.01, 1.5, 3.0})
          for (int a = 0; a < 12; ++a) {
            const double ang = 2 * 3.14159265358979323846 * a / 12 + 0.1;
            const double r = radius * std::pow(eps_prime, t.p_hat);
            grid.push_back({v2(r * std::cos(ang), r * std::sin(ang)), de * std::pow(c.tau, m)});
          }
      states += grid.size();
      // The delta values are not on the run's step grid, which the single-step check does not need.
      const auto rep = forced_success_check(p, c, t, eps_prime, grid, 3);
      eligible += rep.eligible;
      successes += rep.successes;
    }
  }
  const double secs = seconds_since(t0);
  return {states >= 500 && eligible == states && successes == eligible && secs < 10.0,
          "states=" + std::to_string(states) + " eligible=" + std::to_string(eligible) +
              " successes=" + std::to_string(successes) + " runtime_s=" + fmt(secs)};
}

// 4. Estimator statistics at 10 probes, 200 constructions each.
Outcome_ criterion_4() {
  const auto p = noisy_sphere(0.1);
  const EstimateSettings s{0.1, 0.9, 1.0, 2.0, kDefaultSampleCap};
  const RandomStream base(4);
  int pass = 0, probes = 0, capped = 0;
  double worst_acc = 1, worst_var_ratio = 0, worst_bad_ratio = 0;
  for (const Vector& x : {v2(1, 1), v2(-0.5, 2)})
    for (double delta : {1.0, 0.7, 0.5, 0.35, 0.25}) {
      const EstimateProbe probe{x, x + delta * Vector::Unit(2, 0), delta};
      const auto r = estimator_check(p, s, probe, 200, base.child(static_cast<std::uint64_t>(probes)));
      ++probes;
      pass += r.pass();
      capped += r.n_samples >= s.sample_cap;
      worst_acc = std::min(worst_acc, r.joint_accuracy.mean);
      worst_var_ratio = std::max({worst_var_ratio, r.sq_err_f0.mean / r.variance_target,
                                  r.sq_err_fs.mean / r.variance_target});
      worst_bad_ratio = std::max({worst_bad_ratio, r.bad_err_f0.mean / r.bad_target,
                                  r.bad_err_fs.mean / r.bad_target});
    }
  return {pass == probes && capped == 0,
          "probes_passed=" + std::to_string(pass) + "/" + std::to_string(probes) +
              " min_joint_accuracy=" + fmt(worst_acc) + " max_sq_err/target=" + fmt(worst_var_ratio) +
              " max_bad_err/target=" + fmt(worst_bad_ratio) + " capped_probes=" + std::to_string(capped)};
}

// 5. Expected decrease of Phi on a 3x3 state grid.
Outcome_ criterion_5() {
  const auto p = noisy_sphere(0.1);
  const SddsConfig c = coordinate_config();
  std::vector<DriftState> grid;
  for (const Vector& x : {v2(1, 1), v2(0.3, -0.2), v2(0, 0)})
    for (double delta : {0.5, 0.25, 0.125}) grid.push_back({x, delta});
  const auto reports = drift_check(p, c, grid, 500, 5);
  int pass = 0;
  double worst = -1e300, worst_se = 0;
  for (const auto& r : reports) {
    pass += r.pass;
    if (r.change.mean - r.bound > worst) {
      worst = r.change.mean - r.bound;
      worst_se = r.change.stderr_;
    }
  }
  return {pass == 9, "states_passed=" + std::to_string(pass) + "/9 max(mean_change-bound)=" + fmt(worst) +
                         " stderr_there=" + fmt(worst_se)};
}

// 6. Failure decrement and step-size rules over generated traces.
Outcome_ criterion_6() {
  std::size_t traces = 0, records = 0, failures = 0, bad = 0;
  double worst = 0;
  for (const char* name : {"sphere", "quadratic", "rosenbrock"})
    for (PollScheme scheme : {PollScheme::coordinate, PollScheme::minimal, PollScheme::rotated})
      for (int j_max : {0, 1, 3}) {
        ProblemSpec ps;
        ps.name = name;
        ps.noise = NoiseModel::gaussian(0.05);
        ps.box_lower = -3;
        ps.box_upper = 3;
        const auto p = make_problem(ps);
        SddsConfig c;
        c.poll_scheme = scheme;
        c.j_max = j_max;
        c.delta0 = 0.5;
        c.max_iterations = 150;
        c.sample_cap = 20000;
        c.seed = 600 + traces;
        const Vector x0 = std::string(name) == "rosenbrock" ? v2(-1.2, 1.0) : v2(1.0, -1.5);
        const RunTrace t = run(p, x0, c);
        const TraceRuleReport r = check_trace_rules(t);
        ++traces;
        records += t.records.size();
        failures += r.failures;
        worst = std::max(worst, r.max_failure_rel_error);
        bad += r.ok() ? 0 : 1;
      }
  return {bad == 0 && failures > 0,
          "traces=" + std::to_string(traces) + " records=" + std::to_string(records) +
              " failures=" + std::to_string(failures) + " max_rel_error=" + fmt(worst) +
              " traces_with_violations=" + std::to_string(bad)};
}

// 7. Renewal-reward bound on the 12-cell grid plus a degenerate cell.
Outcome_ criterion_7() {
  json doc = {{"output_dir", scratch("c7").string()},
              {"checks", {"rrsim_bound"}},
              {"rrsim",
               {{"n_reps", 10000},
                {"seed", 7},
                {"grid",
                 {{"q", {0.6, 0.75, 0.9}},
                  {"lambda", {std::log(2.0)}},
                  {"delta_eps", {0.05, 0.1}},
                  {"phi0", {1, 10}},
                  {"eta", {1}}}},
                {"cells", {{{"q", 1.0}, {"delta_eps", 0.1}, {"phi0", 10}}}}}}};
  const auto res = cmd_rrsim(parse_experiment(doc));
  int ok_cells = 0;
  double worst = 1e300;
  bool degenerate_exact = false;
  for (const auto& s : res.cells) {
    const bool ok = s.margin >= -3 * s.stderr_T && s.horizon_exceeded == 0;
    ok_cells += ok;
    if (s.params.q < 1) worst = std::min(worst, s.margin / s.bound);
    else degenerate_exact = s.mean_T == std::ceil(10.0 / 0.01 - 1e-9) && s.stderr_T == 0.0;
  }
  return {res.ok() && res.cells.size() == 13 && degenerate_exact,
          "cells_ok=" + std::to_string(ok_cells) + "/" + std::to_string(res.cells.size()) +
              " min_relative_margin=" + fmt(worst) + " degenerate_T_exact=" + (degenerate_exact ? "yes" : "no")};
}

// 8. Stopping-time bound and scaling on the noisy sphere.
Outcome_ criterion_8() {
  json doc = {{"output_dir", scratch("c8").string()},
              {"problem", {{"name", "sphere"}, {"dimension", 2}, {"noise", {{"kind", "gaussian"}, {"parameter", 0.03}}}}},
              {"x0", {1, 1}},
              {"sdds", {{"delta0", 0.5}, {"j_max", 1}, {"poll_scheme", "coordinate"}, {"max_iterations", 100000},
                        {"sample_cap", 1000000}}},
              {"replications", 20},
              {"seed_base", 1000},
              {"epsilons", {0.4, 0.2, 0.1}},
              {"checks", {"complexity_bound", "slope", "cap_fraction", "trace_rules"}}};
  const auto s = cmd_run(parse_experiment(doc));
  std::string rows;
  for (const auto& r : s.rows)
    rows += " eps=" + fmt(r.eps) + ":mean_T=" + fmt(r.mean) + ",bound=" + fmt(std::round(r.bound));
  const double frac = s.total_iterations ? double(s.cap_hits) / s.total_iterations : 0.0;
  return {s.ok(), rows.substr(1) + " slope=" + (s.slope ? fmt(*s.slope) : "n/a") +
                      " (limit 2.5) cap_hit_fraction=" + fmt(frac) + " evals=" + std::to_string(s.total_evals)};
}

// 9. Summability of delta^p over a 10^4-iteration run.
Outcome_ criterion_9() {
  json doc = {{"output_dir", scratch("c9").string()},
              {"problem", {{"name", "sphere"}, {"dimension", 2}, {"noise", {{"kind", "gaussian"}, {"parameter", 1e-4}}}}},
              {"x0", {1, 1}},
              {"sdds", {{"delta0", 0.5}, {"j_max", 1}, {"poll_scheme", "coordinate"}, {"max_iterations", 10000},
                        {"sample_cap", 10000}}},
              {"replications", 1},
              {"seed_base", 9},
              {"checks", {"saturation"}}};
  const auto s = cmd_run(parse_experiment(doc));
  const double sat = s.checks[0].detail["saturation"][0].get<double>();
  return {s.ok() && s.total_iterations == 10000,
          "iterations=" + std::to_string(s.total_iterations) + " saturation=" + fmt(sat) +
              " (limit 0.01) cap_hits=" + std::to_string(s.cap_hits)};
}

// 10. Cosine measure of the coordinate family and rotation invariance.
Outcome_ criterion_10() {
  const auto t0 = Clock::now();
  bool exact_ok = true, numeric_ok = true, rot_ok = true;
  double worst_numeric = 0, worst_rot = 0;
  RandomStream rng(10);
  for (int n = 1; n <= 6; ++n) {
    const double target = 1 / std::sqrt(double(n));
    const auto set = coordinate_basis(n);
    const auto closed = cosine_measure(set);
    exact_ok = exact_ok && closed.lower == target && closed.upper == target && set.kappa == target;
    const double numeric = sampled_cosine_measure(set.directions).value;
    worst_numeric = std::max(worst_numeric, std::abs(numeric - target));
    numeric_ok = numeric_ok && std::abs(numeric - target) <= 1e-3;
    for (int i = 0; i < 100; ++i) {
      const auto r = rotated_basis(n, rng);
      SamplingOptions opt;
      opt.seed = static_cast<std::uint64_t>(1000 * n + i);
      const double v = sampled_cosine_measure(r.directions, opt).value;
      worst_rot = std::max(worst_rot, std::abs(v - target));
      rot_ok = rot_ok && std::abs(v - target) <= 1e-3;
    }
  }
  const double secs = seconds_since(t0);
  return {exact_ok && numeric_ok && rot_ok && secs < 60.0,
          std::string("closed_form_exact=") + (exact_ok ? "yes" : "no") +
              " max_numeric_error=" + fmt(worst_numeric) + " max_rotation_error=" + fmt(worst_rot) +
              " runtime_s=" + fmt(secs)};
}

// 11. Byte-identical traces across invocations.
Outcome_ criterion_11() {
  auto doc_for = [](const fs::path& out) {
    return json{{"output_dir", out.string()},
                {"problem", {{"name", "quadratic"}, {"dimension", 3}, {"noise", {{"kind", "uniform"}, {"parameter", 0.1}}}}},
                {"sdds", {{"delta0", 0.5}, {"randomize_poll_order", true}, {"max_iterations", 150},
                          {"sample_cap", 50000}}},
                {"replications", 3},
                {"seed_base", 11},
                {"epsilons", {0.5}}};
  };
  const auto a = cmd_run(parse_experiment(doc_for(scratch("c11a"))), 1);
  const auto b = cmd_run(parse_experiment(doc_for(scratch("c11b"))), 3);
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.trace_files.size(); ++i) same += slurp(a.trace_files[i]) == slurp(b.trace_files[i]);
  const bool summary_same = slurp(a.output_dir / "summary.json") == slurp(b.output_dir / "summary.json");
  return {same == a.trace_files.size() && same == 3,
          "identical_traces=" + std::to_string(same) + "/" + std::to_string(a.trace_files.size()) +
              " summary_identical=" + (summary_same ? "yes" : "no")};
}

const std::vector<std::pair<std::string, std::function<Outcome_()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Outcome_()>>> list = {
      {"config validity suite", criterion_1},
      {"accurate-estimate decrease implications", criterion_2},
      {"noiseless forced success below delta_eps'", criterion_3},
      {"estimator statistical suite", criterion_4},
      {"Lyapunov drift on a 3x3 grid", criterion_5},
      {"exact failure decrement and step rules", criterion_6},
      {"renewal-reward stopping-time bound", criterion_7},
      {"expected stopping-time bound and scaling", criterion_8},
      {"summability of delta^p", criterion_9},
      {"cosine measure of coordinate sets", criterion_10},
      {"byte-identical reruns", criterion_11},
  };
  return list;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::cerr << "usage: acceptance [--criterion N]\n";
      return 2;
    }
  }
  const auto& list = criteria();
  if (only < 0 || only > static_cast<int>(list.size())) {
    std::cerr << "no criterion " << only << "\n";
    return 2;
  }
  bool all = true;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (only && static_cast<int>(i) + 1 != only) continue;
    const auto t0 = Clock::now();
    Outcome_ o;
    try {
      o = list[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    char head[128];
    std::snprintf(head, sizeof(head), "criterion %2zu %s (%.1fs): ", i + 1, o.pass ? "PASS" : "FAIL",
                  seconds_since(t0));
    std::cout << head << list[i].first << " | " << o.detail << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
