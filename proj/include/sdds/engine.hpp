#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sdds/blackbox.hpp"
#include "sdds/errors.hpp"
#include "sdds/estimator.hpp"
#include "sdds/poll_geometry.hpp"
#include "sdds/random.hpp"

namespace sdds {

enum class PollScheme { coordinate, minimal, rotated };
enum class PollMode { opportunistic, complete };
enum class Outcome { success, failure };
enum class Termination { max_iter, grad_threshold_met, delta_floor, left_domain };

inline std::string to_string(PollScheme s) {
  switch (s) {
    case PollScheme::coordinate: return "coordinate";
    case PollScheme::minimal: return "minimal";
    case PollScheme::rotated: return "rotated";
  }
  return "?";
}

inline std::string to_string(PollMode m) { return m == PollMode::complete ? "complete" : "opportunistic"; }
inline std::string to_string(Outcome o) { return o == Outcome::success ? "success" : "failure"; }

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::max_iter: return "max_iter";
    case Termination::grad_threshold_met: return "grad_threshold_met";
    case Termination::delta_floor: return "delta_floor";
    case Termination::left_domain: return "left_domain";
  }
  return "?";
}

inline PollScheme parse_poll_scheme(const std::string& s) {
  if (s == "coordinate") return PollScheme::coordinate;
  if (s == "minimal") return PollScheme::minimal;
  if (s == "rotated") return PollScheme::rotated;
  throw ParameterError("unknown poll scheme '" + s + "'");
}

inline PollMode parse_poll_mode(const std::string& s) {
  if (s == "opportunistic") return PollMode::opportunistic;
  if (s == "complete") return PollMode::complete;
  throw ParameterError("unknown poll mode '" + s + "'");
}

struct SddsConfig {
  double delta0 = 1.0;
  double eps_f = 0.1;
  double gamma = 6.0;
  double c = 1.0;
  double p = 2.0;
  double tau = 0.5;
  int j_max = 1;
  double beta = 0.9;
  double nu = 0.6;
  PollScheme poll_scheme = PollScheme::rotated;
  PollMode poll_mode = PollMode::opportunistic;
  bool randomize_poll_order = false;
  std::uint64_t seed = 1;
  std::int64_t max_iterations = 1000;
  std::int64_t sample_cap = kDefaultSampleCap;

  double delta_max() const { return std::pow(tau, -static_cast<double>(j_max)) * delta0; }
  double threshold(double delta) const { return -gamma * c * eps_f * std::pow(delta, p); }
  EstimateSettings estimate_settings() const { return {eps_f, beta, c, p, sample_cap}; }
};

struct Violation {
  std::string condition;  // the inequality that fails, written out
  double slack = 0.0;     // signed distance from satisfying it (negative = violated)
  std::string message;
};

struct ConfigValidation {
  bool ok = true;
  std::vector<Violation> violations;
  double tau_upper = 0.0;           // ((gamma-2)/(gamma+2))^(1/p)
  double nu_ratio_required = 0.0;   // 2(tau^-p - 1)/(gamma - 2)
  double beta_ratio_required = 0.0; // nu/(1-nu) * 4/(1 - tau^p)
};

// Relative slack under which the non-strict parameter inequalities count as
// satisfied; decimal inputs such as nu = 0.6 make nu/(1-nu) land one ulp
// below the exact 1.5.
inline constexpr double kInequalityRelTol = 1e-12;

namespace detail {

inline bool at_least(double lhs, double rhs) {
  return lhs >= rhs - kInequalityRelTol * std::max({1.0, std::abs(lhs), std::abs(rhs)});
}

}  // namespace detail

inline ConfigValidation validate_config(const SddsConfig& cfg) {
  ConfigValidation v;
  auto fail = [&](std::string cond, double slack, std::string msg) {
    v.ok = false;
    v.violations.push_back({std::move(cond), slack, std::move(msg)});
  };

  if (!(cfg.delta0 > 0.0)) fail("delta0 > 0", cfg.delta0, "initial step size must be positive");
  if (!(cfg.eps_f > 0.0)) fail("eps_f > 0", cfg.eps_f, "accuracy constant must be positive");
  if (!(cfg.gamma > 2.0)) fail("gamma > 2", cfg.gamma - 2.0, "sufficient decrease factor must exceed 2");
  if (!(cfg.c > 0.0)) fail("c > 0", cfg.c, "forcing constant must be positive");
  if (!(cfg.p > 1.0)) fail("p > 1", cfg.p - 1.0, "forcing exponent must exceed 1");
  if (cfg.j_max < 0) fail("j_max >= 0", cfg.j_max, "j_max must be a non-negative integer");
  if (!(cfg.beta > 0.5 && cfg.beta < 1.0))
    fail("1/2 < beta < 1", std::min(cfg.beta - 0.5, 1.0 - cfg.beta), "accuracy probability out of range");
  if (!(cfg.nu > 0.0 && cfg.nu < 1.0)) fail("0 < nu < 1", std::min(cfg.nu, 1.0 - cfg.nu), "nu out of range");
  if (cfg.max_iterations < 0) fail("max_iterations >= 0", static_cast<double>(cfg.max_iterations), "negative iteration budget");
  if (cfg.sample_cap < 1) fail("sample_cap >= 1", static_cast<double>(cfg.sample_cap), "sample cap must be positive");
  if (!v.ok) return v;  // the derived conditions need sane primitives

  v.tau_upper = std::pow((cfg.gamma - 2.0) / (cfg.gamma + 2.0), 1.0 / cfg.p);
  if (!(cfg.tau > 0.0 && cfg.tau < v.tau_upper))
    fail("0 < tau < ((gamma-2)/(gamma+2))^(1/p)", std::min(cfg.tau, v.tau_upper - cfg.tau),
         "tau must satisfy tau^p < (gamma-2)/(gamma+2); bound is " + std::to_string(v.tau_upper));
  if (!(cfg.tau > 0.0 && cfg.tau < 1.0)) return v;

  const double tau_p = std::pow(cfg.tau, cfg.p);
  const double nu_ratio = cfg.nu / (1.0 - cfg.nu);
  v.nu_ratio_required = 2.0 * (1.0 / tau_p - 1.0) / (cfg.gamma - 2.0);
  if (!detail::at_least(nu_ratio, v.nu_ratio_required))
    fail("nu/(1-nu) >= 2(tau^-p - 1)/(gamma - 2)", nu_ratio - v.nu_ratio_required,
         "nu too small for the success branch to dominate the step-size growth");

  const double beta_ratio = cfg.beta / (1.0 - cfg.beta);
  v.beta_ratio_required = nu_ratio * 4.0 / (1.0 - tau_p);
  if (!detail::at_least(beta_ratio, v.beta_ratio_required))
    fail("beta/(1-beta) >= nu/(1-nu) * 4/(1 - tau^p)", beta_ratio - v.beta_ratio_required,
         "beta too small to offset bad estimates");

  if (!(cfg.delta_max() >= cfg.delta0))
    fail("delta_max >= delta0", cfg.delta_max() - cfg.delta0, "delta_max below the initial step size");
  return v;
}

inline std::string describe(const ConfigValidation& v) {
  std::ostringstream os;
  for (const auto& x : v.violations) os << "violated: " << x.condition << " (slack " << x.slack << "): " << x.message << "\n";
  return os.str();
}

// Throws ParameterError listing every violation.
inline const SddsConfig& require_valid(const SddsConfig& cfg) {
  const auto v = validate_config(cfg);
  if (!v.ok) throw ParameterError("invalid SDDS configuration\n" + describe(v));
  return cfg;
}

// Success iff fs - f0 <= -gamma c eps_f delta^p (equality is a success).
inline Outcome classify_iteration(double f0, double fs, double delta, const SddsConfig& cfg) {
  return fs - f0 <= cfg.threshold(delta) ? Outcome::success : Outcome::failure;
}

inline double update_step_size(double delta, Outcome outcome, const SddsConfig& cfg) {
  if (outcome == Outcome::success) return std::min(delta / cfg.tau, cfg.delta_max());
  return cfg.tau * delta;
}

// Stream ids inside one iteration's stream.
inline constexpr std::uint64_t kStreamF0 = 0;
inline constexpr std::uint64_t kStreamRotation = std::uint64_t{1} << 40;
inline constexpr std::uint64_t kStreamOrder = kStreamRotation + 1;
inline std::uint64_t stream_for_direction(std::size_t j) { return 1 + j; }

struct State {
  Vector x;
  double delta = 1.0;
  std::int64_t k = 0;
};

struct PollEvaluation {
  int direction_index = -1;
  Vector point;
  double fs = 0.0;
  bool outside = false;
};

struct IterationRecord {
  std::int64_t k = 0;
  Vector x;
  double delta = 0.0;
  std::optional<int> direction_index;
  std::optional<Vector> s;
  double f0 = 0.0;
  double fs = std::numeric_limits<double>::quiet_NaN();
  std::int64_t n_samples = 0;    // per estimate
  std::int64_t evaluations = 0;  // blackbox calls in this iteration
  Outcome outcome = Outcome::failure;
  bool cap_hit = false;
  int skipped = 0;               // poll points outside the domain box
  bool all_outside = false;
  double oracle_f = 0.0;
  double oracle_grad_norm = 0.0;
};

struct StepResult {
  State next;
  IterationRecord record;
  std::vector<PollEvaluation> polls;  // in poll order
  DirectionSet directions;
};

inline DirectionSet poll_set(const SddsConfig& cfg, int n, const RandomStream& iteration_stream) {
  switch (cfg.poll_scheme) {
    case PollScheme::coordinate: return coordinate_basis(n);
    case PollScheme::minimal: return minimal_basis(n);
    case PollScheme::rotated: {
      RandomStream r = iteration_stream.child(kStreamRotation);
      return rotated_basis(n, r);
    }
  }
  throw ParameterError("unknown poll scheme");
}

// One poll iteration from `state`. All randomness comes from
// run_stream.child(state.k), so replaying a state replays the iteration.
inline StepResult step(const State& state, const StochasticProblem& problem, const SddsConfig& cfg,
                       const RandomStream& run_stream) {
  problem.require_domain(state.x);
  const RandomStream it = run_stream.child(static_cast<std::uint64_t>(state.k));
  StepResult out;
  out.directions = poll_set(cfg, problem.dimension(), it);
  const auto& dirs = out.directions.directions;

  std::vector<std::size_t> order(dirs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (cfg.randomize_poll_order) {
    RandomStream r = it.child(kStreamOrder);
    std::shuffle(order.begin(), order.end(), r);
  }

  const SampleSize n = required_sample_size(problem.variance_bound(), cfg.eps_f, cfg.beta,
                                            forcing(cfg.c, cfg.p, state.delta), cfg.sample_cap);
  IterationRecord& rec = out.record;
  rec.k = state.k;
  rec.x = state.x;
  rec.delta = state.delta;
  rec.n_samples = n.count;
  rec.cap_hit = n.capped;
  rec.oracle_f = problem.true_value(state.x);
  rec.oracle_grad_norm = problem.true_gradient(state.x).norm();

  RandomStream r0 = it.child(kStreamF0);
  rec.f0 = estimate_value(problem, state.x, n.count, r0);
  rec.evaluations = n.count;

  const double threshold = cfg.threshold(state.delta);
  std::optional<std::size_t> accepted;
  double best_gap = std::numeric_limits<double>::infinity();
  std::optional<std::size_t> last_polled;
  for (std::size_t j : order) {
    PollEvaluation pe;
    pe.direction_index = static_cast<int>(j);
    pe.point = state.x + state.delta * dirs[j];
    if (!problem.in_domain(pe.point)) {
      pe.outside = true;
      ++rec.skipped;
      out.polls.push_back(std::move(pe));
      continue;
    }
    RandomStream rs = it.child(stream_for_direction(j));
    pe.fs = estimate_value(problem, pe.point, n.count, rs);
    rec.evaluations += n.count;
    last_polled = out.polls.size();
    const double gap = pe.fs - rec.f0;
    out.polls.push_back(std::move(pe));
    if (gap <= threshold) {
      if (cfg.poll_mode == PollMode::opportunistic) {
        accepted = out.polls.size() - 1;
        break;
      }
      if (gap < best_gap) {
        best_gap = gap;
        accepted = out.polls.size() - 1;
      }
    }
  }

  State next{state.x, state.delta, state.k + 1};
  if (accepted) {
    const auto& pe = out.polls[*accepted];
    rec.outcome = Outcome::success;
    rec.direction_index = pe.direction_index;
    rec.s = Vector(state.delta * dirs[static_cast<std::size_t>(pe.direction_index)]);
    rec.fs = pe.fs;
    next.x = pe.point;
  } else {
    rec.outcome = Outcome::failure;
    rec.all_outside = !last_polled.has_value();
    if (last_polled) {
      const auto& pe = out.polls[*last_polled];
      rec.direction_index = pe.direction_index;
      rec.s = Vector(state.delta * dirs[static_cast<std::size_t>(pe.direction_index)]);
      rec.fs = pe.fs;
    }
  }
  next.delta = update_step_size(state.delta, rec.outcome, cfg);
  out.next = std::move(next);
  return out;
}

struct StoppingRule {
  std::optional<double> grad_tol;  // oracle |grad f(x^k)| <= grad_tol
  double delta_floor = 1e-8;
};

struct FinalState {
  Vector x;
  double delta = 0.0;
  std::int64_t k = 0;
  double oracle_f = 0.0;
  double oracle_grad_norm = 0.0;
};

struct RunTrace {
  SddsConfig config;
  StoppingRule stop;
  std::string problem_name;
  std::vector<IterationRecord> records;
  FinalState final_state;
  Termination termination = Termination::max_iter;
  std::int64_t total_blackbox_evals = 0;
  std::int64_t cap_hits = 0;
};

inline RunTrace run(const StochasticProblem& problem, const Vector& x0, const SddsConfig& cfg,
                    const StoppingRule& stop = {}) {
  require_valid(cfg);
  if (x0.size() != problem.dimension()) throw ParameterError("starting point has the wrong dimension");
  problem.require_domain(x0);
  const RandomStream stream(cfg.seed);

  RunTrace trace;
  trace.config = cfg;
  trace.stop = stop;
  trace.problem_name = problem.name();
  State state{x0, cfg.delta0, 0};
  while (true) {
    if (stop.grad_tol && problem.true_gradient(state.x).norm() <= *stop.grad_tol) {
      trace.termination = Termination::grad_threshold_met;
      break;
    }
    if (state.k >= cfg.max_iterations) {
      trace.termination = Termination::max_iter;
      break;
    }
    if (state.delta < stop.delta_floor) {
      trace.termination = Termination::delta_floor;
      break;
    }
    StepResult r = step(state, problem, cfg, stream);
    trace.total_blackbox_evals += r.record.evaluations;
    trace.cap_hits += r.record.cap_hit ? 1 : 0;
    const bool left = r.record.all_outside;
    trace.records.push_back(std::move(r.record));
    state = std::move(r.next);
    if (left) {
      trace.termination = Termination::left_domain;
      break;
    }
  }
  trace.final_state = {state.x, state.delta, state.k, problem.true_value(state.x),
                       problem.true_gradient(state.x).norm()};
  return trace;
}

}  // namespace sdds
