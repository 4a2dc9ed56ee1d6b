#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sdds/blackbox.hpp"
#include "sdds/engine.hpp"
#include "sdds/errors.hpp"
#include "sdds/estimator.hpp"
#include "sdds/parallel.hpp"
#include "sdds/poll_geometry.hpp"
#include "sdds/random.hpp"

namespace sdds {

// Sample mean with its Monte Carlo standard error.
struct MeanEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
};

inline MeanEstimate mean_and_stderr(const std::vector<double>& xs) {
  MeanEstimate m;
  m.n = xs.size();
  if (xs.empty()) return m;
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return m;
  double ss = 0.0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.stderr_ = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  return m;
}

// Constants of the complexity analysis for a configuration, a poll family
// (kappa_min, d_min, d_max) and a gradient Lipschitz constant.
struct TheoryConstants {
  double kappa_min = 0.0;
  double d_min = 0.0;
  double d_max = 0.0;
  double L = 0.0;
  double p_hat = 0.0;  // min(p - 1, 1)
  double L1 = 0.0;     // (L d_max + (gamma+2) c eps_f / d_min) / kappa_min
  double L2 = 0.0;     // (1 + L1)^(p / p_hat)
  double zeta = 0.0;   // zeta^p_hat > L1
  double eta = 0.0;    // beta (1 - nu)(1 - tau^p) / 2

  // Step-size threshold below which accurate estimates force a success.
  double delta_eps_prime(double eps_prime) const { return eps_prime / zeta; }
};

// zeta defaults to (1 + L1)^(1/p_hat), so that zeta^p = L2.
inline TheoryConstants make_theory_constants(const SddsConfig& cfg, double kappa_min, double d_min,
                                             double d_max, double L,
                                             std::optional<double> zeta = std::nullopt) {
  if (!(kappa_min > 0.0)) throw ParameterError("theory constants: kappa_min must be positive");
  if (!(d_min > 0.0 && d_max >= d_min)) throw ParameterError("theory constants: need 0 < d_min <= d_max");
  if (!(L > 0.0)) throw ParameterError("theory constants: L must be positive");
  TheoryConstants t;
  t.kappa_min = kappa_min;
  t.d_min = d_min;
  t.d_max = d_max;
  t.L = L;
  t.p_hat = std::min(cfg.p - 1.0, 1.0);
  t.L1 = (L * d_max + (cfg.gamma + 2.0) * cfg.c * cfg.eps_f / d_min) / kappa_min;
  t.L2 = std::pow(1.0 + t.L1, cfg.p / t.p_hat);
  t.zeta = zeta ? *zeta : std::pow(1.0 + t.L1, 1.0 / t.p_hat);
  if (!(std::pow(t.zeta, t.p_hat) > t.L1))
    throw ParameterError("theory constants: zeta^p_hat must exceed L1");
  t.eta = 0.5 * cfg.beta * (1.0 - cfg.nu) * (1.0 - std::pow(cfg.tau, cfg.p));
  return t;
}

// kappa_min is taken as 0.99 kappa(D) of the family so that kappa(D) > kappa_min.
inline TheoryConstants make_theory_constants(const SddsConfig& cfg, const DirectionSet& family, double L) {
  return make_theory_constants(cfg, 0.99 * family.kappa, family.d_min, family.d_max, L);
}

inline DirectionSet reference_poll_family(const SddsConfig& cfg, int n) {
  switch (cfg.poll_scheme) {
    case PollScheme::minimal: return minimal_basis(n);
    case PollScheme::coordinate:
    case PollScheme::rotated: break;
  }
  return coordinate_basis(n);
}

inline TheoryConstants make_theory_constants(const SddsConfig& cfg, const StochasticProblem& problem) {
  return make_theory_constants(cfg, reference_poll_family(cfg, problem.dimension()), problem.lipschitz_grad());
}

// Lyapunov value nu/(c eps_f) (f - f_min) + (1 - nu) delta^p.
inline double phi(double oracle_f, double f_min, double delta, const SddsConfig& cfg) {
  if (!(delta > 0.0)) throw ParameterError("phi: delta must be positive");
  if (oracle_f < f_min) throw ParameterError("phi: f below the declared lower bound");
  return cfg.nu / (cfg.c * cfg.eps_f) * (oracle_f - f_min) + (1.0 - cfg.nu) * std::pow(delta, cfg.p);
}

// Phi_{k+1} - Phi_k computed term by term (f_min cancels).
inline double phi_change(double f_before, double f_after, double delta_before, double delta_after,
                         const SddsConfig& cfg) {
  return cfg.nu / (cfg.c * cfg.eps_f) * (f_after - f_before) +
         (1.0 - cfg.nu) * (std::pow(delta_after, cfg.p) - std::pow(delta_before, cfg.p));
}

// Phi change of an unsuccessful iteration: -(1 - nu)(1 - tau^p) delta^p.
inline double failure_phi_delta(double delta, const SddsConfig& cfg) {
  if (!(delta >= 0.0)) throw ParameterError("failure decrement: delta must be >= 0");
  return -(1.0 - cfg.nu) * (1.0 - std::pow(cfg.tau, cfg.p)) * std::pow(delta, cfg.p);
}

// -nu (gamma - 2)/2 <= -(1 - nu)(1 - tau^p): the good-estimate success branch
// decreases Phi at least as much as a failure does.
inline bool success_dominates_failure(const SddsConfig& cfg) {
  const double success = -0.5 * cfg.nu * (cfg.gamma - 2.0);
  const double failure = -(1.0 - cfg.nu) * (1.0 - std::pow(cfg.tau, cfg.p));
  return success <= failure + kInequalityRelTol * std::max(1.0, std::abs(failure));
}

// Next (x, delta, oracle f) after record i: the following record or the final state.
struct NextState {
  double delta;
  double oracle_f;
};

inline NextState next_state(const RunTrace& trace, std::size_t i) {
  if (i + 1 < trace.records.size()) return {trace.records[i + 1].delta, trace.records[i + 1].oracle_f};
  return {trace.final_state.delta, trace.final_state.oracle_f};
}

struct TraceRuleReport {
  std::size_t failures = 0;
  std::size_t failure_decrement_violations = 0;
  double max_failure_rel_error = 0.0;
  std::size_t step_rule_violations = 0;  // bit-exact update mismatch
  std::size_t grid_violations = 0;       // delta not on tau^m delta0, m >= -j_max
  std::size_t cap_violations = 0;        // delta above delta_max
  std::size_t fixed_iterate_violations = 0;

  bool ok() const {
    return failure_decrement_violations == 0 && step_rule_violations == 0 && grid_violations == 0 &&
           cap_violations == 0 && fixed_iterate_violations == 0;
  }
};

inline bool on_step_grid(double delta, const SddsConfig& cfg) {
  const double m = std::log(delta / cfg.delta0) / std::log(cfg.tau);
  const double mr = std::round(m);
  if (mr < -static_cast<double>(cfg.j_max)) return false;
  const double expected = cfg.delta0 * std::pow(cfg.tau, mr);
  return std::abs(delta - expected) <= 1e-12 * expected;
}

// Exact failure decrement, bit-exact step-size rules, step-size grid and cap,
// and fixed iterates on failures, over a whole trace.
inline TraceRuleReport check_trace_rules(const RunTrace& trace, double rel_tol = 1e-12) {
  const SddsConfig& cfg = trace.config;
  TraceRuleReport rep;
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    const auto& r = trace.records[i];
    const NextState nx = next_state(trace, i);
    if (nx.delta != update_step_size(r.delta, r.outcome, cfg)) ++rep.step_rule_violations;
    if (!on_step_grid(r.delta, cfg)) ++rep.grid_violations;
    if (r.delta > cfg.delta_max()) ++rep.cap_violations;
    if (r.outcome == Outcome::failure) {
      ++rep.failures;
      const Vector& x_next = i + 1 < trace.records.size() ? trace.records[i + 1].x : trace.final_state.x;
      if (x_next != r.x) ++rep.fixed_iterate_violations;
      const double observed = phi_change(r.oracle_f, nx.oracle_f, r.delta, nx.delta, cfg);
      const double expected = failure_phi_delta(r.delta, cfg);
      const double rel = std::abs(observed - expected) / std::abs(expected);
      rep.max_failure_rel_error = std::max(rep.max_failure_rel_error, rel);
      if (!(rel <= rel_tol)) ++rep.failure_decrement_violations;
    }
  }
  return rep;
}

// min{k : oracle |grad f(x^k)| <= eps}; the final state counts as index K.
inline std::optional<std::int64_t> stopping_time(const RunTrace& trace, double eps) {
  for (const auto& r : trace.records)
    if (r.oracle_grad_norm <= eps) return r.k;
  if (trace.final_state.oracle_grad_norm <= eps) return trace.final_state.k;
  return std::nullopt;
}

// 2 phi0 L2 / ((2 beta - 1)(1 - nu)(1 - tau^p)) eps^(-p/p_hat) + 1
inline double complexity_bound(const TheoryConstants& t, double phi0, const SddsConfig& cfg, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw ParameterError("complexity bound: eps must lie in (0, 1)");
  const double denom = (2.0 * cfg.beta - 1.0) * (1.0 - cfg.nu) * (1.0 - std::pow(cfg.tau, cfg.p));
  return 2.0 * phi0 * t.L2 / denom * std::pow(eps, -cfg.p / t.p_hat) + 1.0;
}

struct PowerSumSeries {
  std::vector<double> partial_sums;
  double saturation = 0.0;  // last-decile increment / total
};

inline PowerSumSeries delta_power_sum(const std::vector<double>& deltas, double p) {
  PowerSumSeries out;
  out.partial_sums.reserve(deltas.size());
  double sum = 0.0;
  for (double d : deltas) {
    sum += std::pow(d, p);
    out.partial_sums.push_back(sum);
  }
  if (out.partial_sums.empty() || sum == 0.0) return out;
  const std::size_t n = out.partial_sums.size();
  const std::size_t cut = n - (n + 9) / 10;  // start of the last decile
  const double before = cut == 0 ? 0.0 : out.partial_sums[cut - 1];
  out.saturation = (sum - before) / sum;
  return out;
}

inline PowerSumSeries delta_power_sum(const RunTrace& trace, double p) {
  std::vector<double> deltas;
  deltas.reserve(trace.records.size());
  for (const auto& r : trace.records) deltas.push_back(r.delta);
  return delta_power_sum(deltas, p);
}

// Running minimum of the oracle gradient norms.
inline std::vector<double> min_grad_series(const RunTrace& trace) {
  std::vector<double> out;
  out.reserve(trace.records.size());
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : trace.records) {
    best = std::min(best, r.oracle_grad_norm);
    out.push_back(best);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Single-step drift of Phi at fixed states.

struct DriftState {
  Vector x;
  double delta = 1.0;
};

struct DriftReport {
  Vector x;
  double delta = 0.0;
  std::size_t n_reps = 0;
  MeanEstimate change;
  double bound = 0.0;  // -eta delta^p
  double success_rate = 0.0;
  bool insufficient = false;  // fewer than two replications: no verdict
  bool pass = false;
};

inline std::vector<DriftReport> drift_check(const StochasticProblem& problem, const SddsConfig& cfg,
                                            const std::vector<DriftState>& states, std::size_t n_reps,
                                            std::uint64_t seed, unsigned jobs = 1) {
  require_valid(cfg);
  const TheoryConstants t = make_theory_constants(cfg, problem);
  const RandomStream base(seed);
  std::vector<DriftReport> out(states.size());
  for (std::size_t s = 0; s < states.size(); ++s) {
    const auto& st = states[s];
    std::vector<double> changes(n_reps);
    std::vector<int> successes(n_reps);
    parallel_for(n_reps, jobs, [&](std::size_t rep) {
      const RandomStream rs = base.child({s, rep});
      const StepResult r = step(State{st.x, st.delta, 0}, problem, cfg, rs);
      changes[rep] = phi_change(r.record.oracle_f, problem.true_value(r.next.x), st.delta, r.next.delta, cfg);
      successes[rep] = r.record.outcome == Outcome::success ? 1 : 0;
    });
    DriftReport& d = out[s];
    d.x = st.x;
    d.delta = st.delta;
    d.n_reps = n_reps;
    d.change = mean_and_stderr(changes);
    d.bound = -t.eta * std::pow(st.delta, cfg.p);
    d.success_rate = n_reps ? static_cast<double>(std::count(successes.begin(), successes.end(), 1)) / n_reps : 0.0;
    d.insufficient = n_reps < 2;
    d.pass = !d.insufficient && d.change.mean <= d.bound + 3.0 * d.change.stderr_;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Estimate accuracy statistics at fixed probes.

struct EstimateProbe {
  Vector x;
  Vector x_plus_s;
  double delta = 1.0;
};

struct EstimatorReport {
  double delta = 0.0;
  std::int64_t n_samples = 0;
  std::size_t constructions = 0;
  MeanEstimate joint_accuracy;  // frequency of J_k
  MeanEstimate sq_err_f0;       // E|F0 - f|^2
  MeanEstimate sq_err_fs;
  MeanEstimate bad_err_f0;      // E[1{not J} |F0 - f|]
  MeanEstimate bad_err_fs;
  double accuracy_target = 0.0;  // beta
  double variance_target = 0.0;  // eps_f^2 (1 - beta) rho^2
  double bad_target = 0.0;       // eps_f (1 - beta) rho
  bool accuracy_pass = false;
  bool variance_pass = false;
  bool bad_pass = false;

  bool pass() const { return accuracy_pass && variance_pass && bad_pass; }
};

inline EstimatorReport estimator_check(const StochasticProblem& problem, const EstimateSettings& s,
                                       const EstimateProbe& probe, std::size_t constructions,
                                       const RandomStream& stream) {
  const double fx = problem.true_value(probe.x);
  const double fxs = problem.true_value(probe.x_plus_s);
  const double rho = forcing(s.c, s.p, probe.delta);
  std::vector<double> good, e0, es, b0, bs;
  EstimatorReport rep;
  for (std::size_t i = 0; i < constructions; ++i) {
    const EstimatePair pair = estimate_pair(problem, probe.x, probe.x_plus_s, probe.delta, s, stream.child(i));
    const AccuracyVerdict v = classify_accuracy(pair.f0, pair.fs, fx, fxs, probe.delta, s.eps_f, s.c, s.p);
    rep.n_samples = pair.n_samples_each;
    good.push_back(v.joint_good ? 1.0 : 0.0);
    e0.push_back(v.abs_err_f0 * v.abs_err_f0);
    es.push_back(v.abs_err_fs * v.abs_err_fs);
    b0.push_back(v.joint_good ? 0.0 : v.abs_err_f0);
    bs.push_back(v.joint_good ? 0.0 : v.abs_err_fs);
  }
  rep.delta = probe.delta;
  rep.constructions = constructions;
  rep.joint_accuracy = mean_and_stderr(good);
  rep.sq_err_f0 = mean_and_stderr(e0);
  rep.sq_err_fs = mean_and_stderr(es);
  rep.bad_err_f0 = mean_and_stderr(b0);
  rep.bad_err_fs = mean_and_stderr(bs);
  rep.accuracy_target = s.beta;
  rep.variance_target = s.eps_f * s.eps_f * (1.0 - s.beta) * rho * rho;
  rep.bad_target = s.eps_f * (1.0 - s.beta) * rho;
  rep.accuracy_pass = rep.joint_accuracy.mean >= s.beta - 3.0 * rep.joint_accuracy.stderr_;
  rep.variance_pass = rep.sq_err_f0.mean <= rep.variance_target + 3.0 * rep.sq_err_f0.stderr_ &&
                      rep.sq_err_fs.mean <= rep.variance_target + 3.0 * rep.sq_err_fs.stderr_;
  rep.bad_pass = rep.bad_err_f0.mean <= rep.bad_target + 3.0 * rep.bad_err_f0.stderr_ &&
                 rep.bad_err_fs.mean <= rep.bad_target + 3.0 * rep.bad_err_fs.stderr_;
  return rep;
}

// ---------------------------------------------------------------------------
// Sufficient-decrease implications for accurate estimate pairs.

struct DecreaseImplicationReport {
  std::size_t steps = 0;
  std::size_t pairs = 0;             // (f0, fs) pairs examined
  std::size_t joint_good = 0;
  std::size_t good_success = 0;
  std::size_t good_failure = 0;
  std::size_t success_violations = 0;  // f(x+s) - f(x) > -(gamma-2) eps_f rho
  std::size_t failure_violations = 0;  // f(x+s) - f(x) <= -(gamma+2) eps_f rho

  bool ok() const { return success_violations == 0 && failure_violations == 0; }
};

// Examines every polled (f0, fs) pair of one step: an accurate pair that
// passes the decrease test must decrease f by (gamma-2) eps_f rho(delta); an
// accurate pair that fails it cannot decrease f by (gamma+2) eps_f rho(delta).
inline void accumulate_decrease_implications(const StochasticProblem& problem, const SddsConfig& cfg,
                                             const StepResult& r, DecreaseImplicationReport& rep) {
  ++rep.steps;
  const double fx = r.record.oracle_f;
  const double rho = forcing(cfg.c, cfg.p, r.record.delta);
  for (const auto& pe : r.polls) {
    if (pe.outside) continue;
    ++rep.pairs;
    const double fxs = problem.true_value(pe.point);
    const AccuracyVerdict v = classify_accuracy(r.record.f0, pe.fs, fx, fxs, r.record.delta, cfg.eps_f, cfg.c, cfg.p);
    if (!v.joint_good) continue;
    ++rep.joint_good;
    const double change = fxs - fx;
    if (classify_iteration(r.record.f0, pe.fs, r.record.delta, cfg) == Outcome::success) {
      ++rep.good_success;
      if (!(change <= -(cfg.gamma - 2.0) * cfg.eps_f * rho)) ++rep.success_violations;
    } else {
      ++rep.good_failure;
      if (!(change > -(cfg.gamma + 2.0) * cfg.eps_f * rho)) ++rep.failure_violations;
    }
  }
}

// ---------------------------------------------------------------------------
// Accurate estimates below delta_eps' force success.

struct ForcedSuccessReport {
  std::size_t eligible = 0;   // all estimates accurate, delta <= delta_eps', |grad|^(1/p_hat) > eps'
  std::size_t successes = 0;

  bool ok() const { return eligible == successes; }
};

inline bool all_estimates_accurate(const StochasticProblem& problem, const SddsConfig& cfg, const StepResult& r) {
  const double fx = r.record.oracle_f;
  for (const auto& pe : r.polls) {
    if (pe.outside) continue;
    const auto v = classify_accuracy(r.record.f0, pe.fs, fx, problem.true_value(pe.point), r.record.delta,
                                     cfg.eps_f, cfg.c, cfg.p);
    if (!v.joint_good) return false;
  }
  return true;
}

inline void accumulate_forced_success(const StochasticProblem& problem, const SddsConfig& cfg,
                                      const TheoryConstants& t, double eps_prime, const StepResult& r,
                                      ForcedSuccessReport& rep) {
  if (!(r.record.delta <= t.delta_eps_prime(eps_prime))) return;
  if (!(std::pow(r.record.oracle_grad_norm, 1.0 / t.p_hat) > eps_prime)) return;
  if (!all_estimates_accurate(problem, cfg, r)) return;
  ++rep.eligible;
  if (r.record.outcome == Outcome::success) ++rep.successes;
}

inline ForcedSuccessReport forced_success_check(const StochasticProblem& problem, const SddsConfig& cfg,
                                                const TheoryConstants& t, double eps_prime,
                                                const std::vector<DriftState>& states, std::uint64_t seed) {
  ForcedSuccessReport rep;
  const RandomStream base(seed);
  for (std::size_t i = 0; i < states.size(); ++i) {
    const StepResult r = step(State{states[i].x, states[i].delta, 0}, problem, cfg, base.child(i));
    accumulate_forced_success(problem, cfg, t, eps_prime, r, rep);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Stopping times over replications.

struct StoppingTimeRow {
  double eps = 0.0;
  std::size_t replications = 0;
  std::size_t reached = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();    // over reached runs
  double median = std::numeric_limits<double>::quiet_NaN();
  MeanEstimate stats;
  double bound = 0.0;
};

inline double median_of(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

inline std::vector<StoppingTimeRow> summarize_stopping_times(const std::vector<RunTrace>& traces,
                                                             const std::vector<double>& epsilons,
                                                             const TheoryConstants& t, double phi0) {
  std::vector<StoppingTimeRow> rows;
  for (double eps : epsilons) {
    StoppingTimeRow row;
    row.eps = eps;
    row.replications = traces.size();
    std::vector<double> ts;
    for (const auto& tr : traces)
      if (auto T = stopping_time(tr, eps)) ts.push_back(static_cast<double>(*T));
    row.reached = ts.size();
    row.stats = mean_and_stderr(ts);
    if (!ts.empty()) {
      row.mean = row.stats.mean;
      row.median = median_of(ts);
    }
    row.bound = traces.empty() ? 0.0 : complexity_bound(t, phi0, traces.front().config, eps);
    rows.push_back(row);
  }
  return rows;
}

// Least-squares slope of log(mean T) against log(1/eps).
inline double loglog_slope(const std::vector<double>& eps, const std::vector<double>& mean_t) {
  const std::size_t n = eps.size();
  if (n < 2 || mean_t.size() != n) return std::numeric_limits<double>::quiet_NaN();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = -std::log(eps[i]);
    const double y = std::log(mean_t[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace sdds
