#pragma once

#include <cmath>
#include <cstdint>

#include "sdds/blackbox.hpp"
#include "sdds/errors.hpp"
#include "sdds/random.hpp"

namespace sdds {

inline constexpr std::int64_t kDefaultSampleCap = 1'000'000;

// Forcing function rho(t) = c t^p.
inline double forcing(double c, double p, double delta) {
  if (!(c > 0.0)) throw ParameterError("forcing: c must be positive");
  if (!(p > 1.0)) throw ParameterError("forcing: p must exceed 1");
  if (!(delta > 0.0)) throw ParameterError("forcing: delta must be positive");
  return c * std::pow(delta, p);
}

struct SampleSize {
  std::int64_t count = 1;
  bool capped = false;  // the cap bound: accuracy guarantees no longer hold
};

// Smallest p with p >= V / (eps_f^2 (1 - sqrt(beta)) rho^2), at least 1, at most cap.
inline SampleSize required_sample_size(double variance_bound, double eps_f, double beta,
                                       double rho_delta, std::int64_t cap = kDefaultSampleCap) {
  if (!(variance_bound >= 0.0)) throw ParameterError("sample size: variance bound must be >= 0");
  if (!(eps_f > 0.0)) throw ParameterError("sample size: eps_f must be positive");
  if (!(beta > 0.5 && beta < 1.0)) throw ParameterError("sample size: beta must lie in (1/2, 1)");
  if (!(rho_delta > 0.0)) throw ParameterError("sample size: rho(delta) must be positive");
  if (cap < 1) throw ParameterError("sample size: cap must be >= 1");

  const double needed = variance_bound / (eps_f * eps_f * (1.0 - std::sqrt(beta)) * rho_delta * rho_delta);
  if (!(needed <= static_cast<double>(cap))) return {cap, true};
  const auto count = static_cast<std::int64_t>(std::ceil(needed));
  return {count < 1 ? 1 : count, false};
}

// Arithmetic mean of n fresh samples at x. The noise part is accumulated in
// draw order and added to f(x) once, so a noiseless blackbox returns f(x)
// bit-exactly.
inline double estimate_value(const StochasticProblem& problem, const Vector& x, std::int64_t n,
                             RandomStream& rng) {
  problem.require_domain(x);
  const double fx = problem.true_value(x);
  if (problem.noise().kind == NoiseModel::Kind::zero) return fx;
  double noise_sum = 0.0;
  for (std::int64_t i = 0; i < n; ++i) noise_sum += problem.noise().draw(rng);
  return fx + noise_sum / static_cast<double>(n);
}

struct EstimatePair {
  double f0 = 0.0;
  double fs = 0.0;
  std::int64_t n_samples_each = 1;
  double delta_used = 0.0;
  bool capped = false;
};

struct EstimateSettings {
  double eps_f = 0.1;
  double beta = 0.9;
  double c = 1.0;
  double p = 2.0;
  std::int64_t sample_cap = kDefaultSampleCap;
};

// f0 and fs built from the disjoint substreams child(0) and child(1) of rng.
inline EstimatePair estimate_pair(const StochasticProblem& problem, const Vector& x,
                                  const Vector& x_plus_s, double delta, const EstimateSettings& s,
                                  const RandomStream& rng) {
  const SampleSize n = required_sample_size(problem.variance_bound(), s.eps_f, s.beta,
                                            forcing(s.c, s.p, delta), s.sample_cap);
  RandomStream r0 = rng.child(0);
  RandomStream rs = rng.child(1);
  EstimatePair out;
  out.f0 = estimate_value(problem, x, n.count, r0);
  out.fs = estimate_value(problem, x_plus_s, n.count, rs);
  out.n_samples_each = n.count;
  out.delta_used = delta;
  out.capped = n.capped;
  return out;
}

struct AccuracyVerdict {
  bool f0_good = false;
  bool fs_good = false;
  bool joint_good = false;
  double abs_err_f0 = 0.0;
  double abs_err_fs = 0.0;
};

// eps_f-accuracy of each estimate against the oracle; ties count as accurate.
inline AccuracyVerdict classify_accuracy(double f0, double fs, double f_x, double f_xs, double delta,
                                         double eps_f, double c, double p) {
  const double radius = eps_f * forcing(c, p, delta);
  AccuracyVerdict v;
  v.abs_err_f0 = std::abs(f0 - f_x);
  v.abs_err_fs = std::abs(fs - f_xs);
  v.f0_good = v.abs_err_f0 <= radius;
  v.fs_good = v.abs_err_fs <= radius;
  v.joint_good = v.f0_good && v.fs_good;
  return v;
}

inline AccuracyVerdict classify_accuracy(const EstimatePair& pair, const StochasticProblem& problem,
                                         const Vector& x, const Vector& x_plus_s, double eps_f,
                                         double c, double p) {
  return classify_accuracy(pair.f0, pair.fs, problem.true_value(x), problem.true_value(x_plus_s),
                           pair.delta_used, eps_f, c, p);
}

}  // namespace sdds
