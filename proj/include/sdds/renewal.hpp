#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "sdds/diagnostics.hpp"
#include "sdds/errors.hpp"
#include "sdds/parallel.hpp"
#include "sdds/random.hpp"

namespace sdds {

// Abstract step-size / Lyapunov process driven by a biased +-1 random walk.
struct RRParams {
  double q = 0.9;            // P(W = +1)
  double lambda = std::log(2.0);
  double delta0 = 0.1;
  double delta_eps = 0.1;    // delta0 e^(lambda j), j <= 0
  double delta_max = 1.0;    // delta0 e^(lambda j_max)
  double phi0 = 10.0;
  double eta = 1.0;
  double h_exponent = 2.0;   // h(x) = x^h_exponent
  double decrement_noise = 0.0;  // half width of mean-preserving multiplicative noise on the decrement
  std::int64_t horizon = 10'000'000;

  double h(double x) const { return std::pow(x, h_exponent); }
};

namespace detail {

inline bool on_exp_grid(double value, double delta0, double lambda, double& j) {
  j = std::round(std::log(value / delta0) / lambda);
  const double expected = delta0 * std::exp(lambda * j);
  return std::abs(value - expected) <= 1e-9 * expected;
}

}  // namespace detail

// q = 1 is accepted as a degenerate deterministic case.
inline void validate(const RRParams& r) {
  if (!(r.q > 0.5 && r.q <= 1.0)) throw ParameterError("rrsim: q must lie in (1/2, 1]");
  if (!(r.lambda > 0.0)) throw ParameterError("rrsim: lambda must be positive");
  if (!(r.delta0 > 0.0 && r.delta_eps > 0.0 && r.delta_max > 0.0))
    throw ParameterError("rrsim: step sizes must be positive");
  if (!(r.delta_eps <= r.delta0 * (1 + 1e-12) && r.delta0 <= r.delta_max * (1 + 1e-12)))
    throw ParameterError("rrsim: need delta_eps <= delta0 <= delta_max");
  double j = 0.0;
  if (!detail::on_exp_grid(r.delta_eps, r.delta0, r.lambda, j))
    throw ParameterError("rrsim: delta_eps is not on the grid delta0 e^(lambda j)");
  if (!detail::on_exp_grid(r.delta_max, r.delta0, r.lambda, j))
    throw ParameterError("rrsim: delta_max is not on the grid delta0 e^(lambda j)");
  if (!(r.phi0 >= 0.0)) throw ParameterError("rrsim: phi0 must be >= 0");
  if (!(r.eta > 0.0)) throw ParameterError("rrsim: eta must be positive");
  if (!(r.h_exponent > 0.0)) throw ParameterError("rrsim: h exponent must be positive");
  if (!(r.decrement_noise >= 0.0 && r.decrement_noise <= 1.0))
    throw ParameterError("rrsim: decrement noise must lie in [0, 1]");
  if (r.horizon < 1) throw ParameterError("rrsim: horizon must be >= 1");
}

// q/(2q - 1) * phi0 / (eta h(delta_eps)) + 1
inline double bound(const RRParams& r) {
  if (!(r.q > 0.5)) throw ParameterError("rrsim bound: q must exceed 1/2");
  return r.q / (2.0 * r.q - 1.0) * r.phi0 / (r.eta * r.h(r.delta_eps)) + 1.0;
}

struct RRPoint {
  double phi;
  double delta;
  int w;
};

struct RRRun {
  std::int64_t T = 0;
  bool horizon_exceeded = false;
  std::vector<RRPoint> trajectory;  // only when requested
};

// Phi at or below this fraction of phi0 counts as having hit zero; absorbs
// the rounding of repeated subtraction.
inline constexpr double kPhiZeroRelTol = 1e-12;

// Delta^{k+1} = min(Delta^k e^(lambda W_{k+1}), delta_eps, delta_max)
// Phi_{k+1}   = max(Phi_k - eta h(Delta^k), 0)
// T           = first k with Phi_k = 0
inline RRRun simulate_T(const RRParams& r, RandomStream& rng, bool keep_trajectory = false) {
  validate(r);
  RRRun out;
  const double up = std::exp(r.lambda);
  const double down = std::exp(-r.lambda);
  const double cap = std::min(r.delta_eps, r.delta_max);
  const double zero = kPhiZeroRelTol * r.phi0;
  double phi = r.phi0;
  double delta = r.delta0;
  int w = 1;
  std::int64_t k = 0;
  while (phi > zero) {
    if (keep_trajectory) out.trajectory.push_back({phi, delta, w});
    if (k >= r.horizon) {
      out.horizon_exceeded = true;
      out.T = k;
      return out;
    }
    double dec = r.eta * r.h(delta);
    if (r.decrement_noise > 0.0) dec *= 1.0 + rng.uniform(-r.decrement_noise, r.decrement_noise);
    phi = std::max(phi - dec, 0.0);
    w = (r.q >= 1.0 || rng.bernoulli(r.q)) ? 1 : -1;
    delta = std::min(delta * (w > 0 ? up : down), cap);
    ++k;
  }
  if (keep_trajectory) out.trajectory.push_back({phi, delta, w});
  out.T = k;
  return out;
}

struct RRSummary {
  RRParams params;
  std::size_t n_reps = 0;
  double mean_T = 0.0;
  double stderr_T = 0.0;
  double bound = 0.0;
  double margin = 0.0;  // bound - mean
  std::size_t horizon_exceeded = 0;
};

inline RRSummary monte_carlo(const RRParams& r, std::size_t n_reps, const RandomStream& rng, unsigned jobs = 1) {
  if (n_reps < 1) throw ParameterError("rrsim: need at least one replication");
  validate(r);
  std::vector<double> ts(n_reps);
  std::vector<int> exceeded(n_reps, 0);
  parallel_for(n_reps, jobs, [&](std::size_t i) {
    RandomStream s = rng.child(i);
    const RRRun run = simulate_T(r, s);
    ts[i] = static_cast<double>(run.T);
    exceeded[i] = run.horizon_exceeded ? 1 : 0;
  });
  const MeanEstimate m = mean_and_stderr(ts);
  RRSummary out;
  out.params = r;
  out.n_reps = n_reps;
  out.mean_T = m.mean;
  out.stderr_T = m.stderr_;
  out.bound = bound(r);
  out.margin = out.bound - out.mean_T;
  out.horizon_exceeded = static_cast<std::size_t>(std::count(exceeded.begin(), exceeded.end(), 1));
  return out;
}

}  // namespace sdds
