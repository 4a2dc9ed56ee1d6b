#include <gtest/gtest.h>

#include <cmath>

#include "sdds/diagnostics.hpp"

using namespace sdds;

namespace {

StochasticProblem sphere(double sigma = 0.0) {
  ProblemSpec s;
  s.noise = sigma > 0 ? NoiseModel::gaussian(sigma) : NoiseModel::zero();
  return make_problem(s);
}

Vector v2(double a, double b) {
  Vector x(2);
  x << a, b;
  return x;
}

SddsConfig coord() {
  SddsConfig c;
  c.poll_scheme = PollScheme::coordinate;
  return c;
}

RunTrace failure_trace(int n) {
  RunTrace t;
  t.config = coord();
  double d = 1.0;
  for (int k = 0; k < n; ++k) {
    IterationRecord r;
    r.k = k;
    r.x = v2(0, 0);
    r.delta = d;
    r.outcome = Outcome::failure;
    t.records.push_back(r);
    d *= 0.5;
  }
  t.final_state = {v2(0, 0), d, n, 0.0, 0.0};
  return t;
}

}  // namespace

TEST(Phi, Examples) {
  const SddsConfig c = coord();
  EXPECT_NEAR(phi(0.0, 0.0, 1.0, c), 0.4, 1e-15);
  EXPECT_NEAR(phi(1.0, 0.0, 0.5, c), 6.1, 1e-12);
  EXPECT_LT(phi(1e-12, 0.0, 1e-6, c), 1e-10);
  EXPECT_THROW(phi(-1.0, 0.0, 1.0, c), ParameterError);
}

TEST(FailurePhiDelta, Examples) {
  const SddsConfig c = coord();
  EXPECT_NEAR(failure_phi_delta(1.0, c), -0.3, 1e-15);
  EXPECT_EQ(failure_phi_delta(0.0, c), 0.0);
}

TEST(TheoryConstants, SphereCoordinateExample) {
  const SddsConfig c = coord();
  const auto t = make_theory_constants(c, 1 / std::sqrt(2.0), 1, 1, 1);
  // L1 = sqrt(2)(1 + 0.8), L2 = (1 + L1)^2
  const double L1 = std::sqrt(2.0) * 1.8;
  EXPECT_NEAR(t.L1, L1, 1e-12);
  EXPECT_NEAR(t.L1, 2.5456, 1e-4);
  EXPECT_NEAR(t.L2, (1 + L1) * (1 + L1), 1e-12);
  EXPECT_NEAR(t.L2, 12.571, 1e-3);
  EXPECT_EQ(t.p_hat, 1.0);
  EXPECT_GT(std::pow(t.zeta, t.p_hat), t.L1);
  EXPECT_NEAR(t.eta, 0.5 * 0.9 * 0.4 * 0.75, 1e-15);
  EXPECT_THROW(make_theory_constants(c, 0.7, 1, 1, 1, 2.0), ParameterError);
}

TEST(TheoryConstants, Invariants) {
  RandomStream rng(6);
  for (int i = 0; i < 200; ++i) {
    SddsConfig c = coord();
    c.p = 1.0 + rng.uniform(0.05, 3);
    const auto t = make_theory_constants(c, rng.uniform(0.05, 1), 1, rng.uniform(1, 3), rng.uniform(0.1, 100));
    EXPECT_GE(t.L2, 1.0);
    EXPECT_GE(c.p / t.p_hat, 2.0 - 1e-12);
    EXPECT_GT(std::pow(t.zeta, t.p_hat), t.L1);
  }
}

TEST(ComplexityBound, Examples) {
  const SddsConfig c = coord();
  const auto t = make_theory_constants(c, 1 / std::sqrt(2.0), 1, 1, 1);
  const double expected = 2 * 6.1 * t.L2 / (0.8 * 0.4 * 0.75) * 100 + 1;
  EXPECT_NEAR(complexity_bound(t, 6.1, c, 0.1), expected, 1e-9 * expected);
  EXPECT_NEAR(complexity_bound(t, 6.1, c, 0.1), 63903, 2);
  const double limit = 2 * 6.1 * t.L2 / (0.8 * 0.4 * 0.75) + 1;
  EXPECT_NEAR(complexity_bound(t, 6.1, c, 1 - 1e-12), limit, 1e-6);
  EXPECT_THROW(complexity_bound(t, 6.1, c, 1.0), ParameterError);
  EXPECT_THROW(complexity_bound(t, 6.1, c, 0.0), ParameterError);
}

TEST(ComplexityBound, KappaMinFromFamily) {
  const SddsConfig c = coord();
  const auto t = make_theory_constants(c, sphere());
  EXPECT_NEAR(t.kappa_min, 0.99 / std::sqrt(2.0), 1e-15);
}

TEST(DeltaPowerSum, GeometricSeries) {
  const auto s = delta_power_sum(failure_trace(60), 2.0);
  ASSERT_EQ(s.partial_sums.size(), 60u);
  EXPECT_NEAR(s.partial_sums.back(), 4.0 / 3.0, 1e-15);
  EXPECT_EQ(s.partial_sums.front(), 1.0);
  EXPECT_LT(s.saturation, 1e-15);
  EXPECT_TRUE(delta_power_sum(std::vector<double>{}, 2.0).partial_sums.empty());
  const auto flat = delta_power_sum(std::vector<double>(100, 1.0), 2.0);
  EXPECT_NEAR(flat.saturation, 0.1, 1e-15);
}

TEST(StoppingTime, Examples) {
  SddsConfig c = coord();
  StoppingRule stop;
  stop.grad_tol = 1e-2;
  const auto t = run(sphere(), v2(1, 1), c, stop);
  std::optional<std::int64_t> expected;
  for (const auto& r : t.records)
    if (!expected && r.x.norm() <= 0.5) expected = r.k;
  ASSERT_TRUE(expected.has_value());
  EXPECT_EQ(stopping_time(t, 0.5), expected);
  EXPECT_EQ(stopping_time(t, 2.0), 0);
  EXPECT_EQ(stopping_time(failure_trace(3), 0.5), 0);
  EXPECT_FALSE(stopping_time(t, 1e-9).has_value());
}

TEST(MinGradSeries, Examples) {
  const auto one = failure_trace(1);
  RunTrace t = one;
  t.records[0].oracle_grad_norm = 0.7;
  EXPECT_EQ(min_grad_series(t), std::vector<double>{0.7});
  StoppingRule stop;
  stop.grad_tol = 1e-2;
  const auto r = run(sphere(), v2(1, 1), coord(), stop);
  const auto s = min_grad_series(r);
  for (std::size_t i = 0; i + 1 < s.size(); ++i) EXPECT_LE(s[i + 1], s[i]);
  EXPECT_LE(std::min(s.back(), r.final_state.oracle_grad_norm), 1e-2);
}

TEST(TraceRules, FailureDecrementExact) {
  SddsConfig c;
  c.max_iterations = 300;
  c.delta0 = 0.5;
  c.sample_cap = 20000;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    c.seed = seed;
    const auto t = run(sphere(0.05), v2(1, 1), c);
    const auto rep = check_trace_rules(t);
    EXPECT_TRUE(rep.ok());
    EXPECT_GT(rep.failures, 0u);
    EXPECT_LE(rep.max_failure_rel_error, 1e-12);
  }
  RunTrace bad = failure_trace(4);
  bad.records[2].delta = 0.3;
  EXPECT_FALSE(check_trace_rules(bad).ok());
}

TEST(Drift, NoiselessDescendingStatePasses) {
  const SddsConfig c = coord();
  const auto r = drift_check(sphere(), c, {{v2(1, 0), 0.25}}, 5, 1);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_TRUE(r[0].pass);
  EXPECT_EQ(r[0].success_rate, 1.0);
  EXPECT_LE(r[0].change.mean, -0.5 * c.nu * (c.gamma - 2) * 0.0625);
}

TEST(Drift, MinimizerPassesViaNuCondition) {
  const SddsConfig c = coord();
  const auto r = drift_check(sphere(), c, {{v2(0, 0), 0.5}}, 3, 1);
  EXPECT_TRUE(r[0].pass);
  EXPECT_EQ(r[0].success_rate, 0.0);
  EXPECT_NEAR(r[0].change.mean, failure_phi_delta(0.5, c), 1e-15);
  EXPECT_TRUE(success_dominates_failure(c));
}

TEST(Drift, SingleReplicationInsufficient) {
  const auto r = drift_check(sphere(0.1), coord(), {{v2(1, 1), 0.5}}, 1, 1);
  EXPECT_TRUE(r[0].insufficient);
  EXPECT_FALSE(r[0].pass);
}

TEST(Drift, RejectsInvalidConfig) {
  SddsConfig c = coord();
  c.nu = 0.5;
  EXPECT_THROW(drift_check(sphere(), c, {{v2(1, 1), 0.5}}, 3, 1), ParameterError);
}

TEST(Drift, NoisyGrid) {
  const auto r = drift_check(sphere(0.1), coord(), {{v2(1, 1), 0.5}, {v2(0.1, 0.1), 0.25}}, 200, 3);
  for (const auto& d : r) EXPECT_TRUE(d.pass) << d.change.mean << " vs " << d.bound;
}

TEST(DecreaseImplications, NoViolationsOnNoisySphere) {
  const auto p = sphere(0.1);
  const SddsConfig c = coord();
  DecreaseImplicationReport rep;
  const RandomStream base(11);
  for (int i = 0; i < 300; ++i) {
    RandomStream s = base.child({0, static_cast<std::uint64_t>(i)});
    const Vector x = v2(s.uniform(-2, 2), s.uniform(-2, 2));
    const auto r = step(State{x, 0.5, 0}, p, c, base.child({1, static_cast<std::uint64_t>(i)}));
    accumulate_decrease_implications(p, c, r, rep);
  }
  EXPECT_TRUE(rep.ok());
  EXPECT_GT(rep.good_success, 0u);
  EXPECT_GT(rep.good_failure, 0u);
}

TEST(ForcedSuccess, NoiselessStatesBelowThreshold) {
  const auto p = sphere();
  const SddsConfig c = coord();
  const auto t = make_theory_constants(c, p);
  std::vector<DriftState> states;
  for (double r : {1.01, 2.0})
    for (int m = 0; m < 3; ++m) states.push_back({v2(r * 0.3, 0), t.delta_eps_prime(0.3) * std::pow(0.5, m)});
  const auto rep = forced_success_check(p, c, t, 0.3, states, 1);
  EXPECT_EQ(rep.eligible, states.size());
  EXPECT_TRUE(rep.ok());
}

TEST(StoppingTimes, SummaryAndSlope) {
  SddsConfig c = coord();
  c.delta0 = 0.5;
  StoppingRule stop;
  stop.grad_tol = 0.1;
  std::vector<RunTrace> traces;
  for (std::uint64_t s = 1; s <= 4; ++s) {
    c.seed = s;
    traces.push_back(run(sphere(0.01), v2(1, 1), c, stop));
  }
  const auto t = make_theory_constants(c, sphere(0.01));
  const double phi0 = phi(1.0, 0.0, c.delta0, c);
  const auto rows = summarize_stopping_times(traces, {0.4, 0.2, 0.1}, t, phi0);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.reached, 4u);
    EXPECT_LE(r.mean, r.bound);
  }
  EXPECT_NEAR(loglog_slope({0.4, 0.2, 0.1}, {1, 4, 16}), 2.0, 1e-12);
  EXPECT_EQ(median_of({3, 1, 2}), 2.0);
  EXPECT_EQ(median_of({4, 1, 2, 3}), 2.5);
}

TEST(MeanAndStderr, Basic) {
  const auto m = mean_and_stderr({1, 2, 3, 4});
  EXPECT_EQ(m.mean, 2.5);
  EXPECT_NEAR(m.stderr_, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
  EXPECT_EQ(mean_and_stderr({}).n, 0u);
}
