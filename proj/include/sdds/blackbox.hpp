#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>

#include "sdds/errors.hpp"
#include "sdds/random.hpp"

namespace sdds {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Additive, state-independent noise on top of the true objective.
struct NoiseModel {
  enum class Kind { zero, gaussian, uniform };

  Kind kind = Kind::zero;
  double parameter = 0.0;  // sigma for gaussian, half width for uniform

  static NoiseModel zero() { return {}; }
  static NoiseModel gaussian(double sigma) {
    if (!(sigma >= 0.0)) throw ParameterError("gaussian noise: sigma must be >= 0");
    return {Kind::gaussian, sigma};
  }
  static NoiseModel uniform(double half_width) {
    if (!(half_width >= 0.0)) throw ParameterError("uniform noise: half width must be >= 0");
    return {Kind::uniform, half_width};
  }

  double variance() const {
    switch (kind) {
      case Kind::gaussian: return parameter * parameter;
      case Kind::uniform: return parameter * parameter / 3.0;
      case Kind::zero: break;
    }
    return 0.0;
  }

  // Exactly one variate is consumed from the stream for the random kinds.
  double draw(RandomStream& rng) const {
    switch (kind) {
      case Kind::gaussian: return parameter * rng.normal();
      case Kind::uniform: return rng.uniform(-parameter, parameter);
      case Kind::zero: break;
    }
    return 0.0;
  }

  std::string name() const {
    switch (kind) {
      case Kind::gaussian: return "gaussian";
      case Kind::uniform: return "uniform";
      case Kind::zero: break;
    }
    return "zero";
  }
};

// Axis-aligned box [lower_i, upper_i].
struct Box {
  Vector lower;
  Vector upper;

  static Box cube(int n, double lo, double hi) {
    return {Vector::Constant(n, lo), Vector::Constant(n, hi)};
  }

  int dimension() const { return static_cast<int>(lower.size()); }

  bool contains(const Vector& x) const {
    if (x.size() != lower.size()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if (!(x[i] >= lower[i] && x[i] <= upper[i])) return false;
    return true;
  }
};

// A noisy blackbox f_Theta(x) = f(x) + noise together with the oracle
// quantities (true f, gradient, L, f_min) that only diagnostics may use.
// Immutable after construction; safe to share across threads.
class StochasticProblem {
 public:
  using ValueFn = std::function<double(const Vector&)>;
  using GradientFn = std::function<Vector(const Vector&)>;

  StochasticProblem(std::string name, int dimension, ValueFn value, GradientFn gradient,
                    NoiseModel noise, double variance_bound, double lipschitz_grad,
                    double lower_bound, Box box)
      : name_(std::move(name)),
        dimension_(dimension),
        value_(std::move(value)),
        gradient_(std::move(gradient)),
        noise_(noise),
        variance_bound_(variance_bound),
        lipschitz_(lipschitz_grad),
        f_min_(lower_bound),
        box_(std::move(box)) {
    if (dimension_ <= 0) throw ParameterError("problem dimension must be positive");
    if (box_.dimension() != dimension_) throw ParameterError("domain box dimension mismatch");
    if (!(variance_bound_ >= noise_.variance()))
      throw ParameterError("variance bound must dominate the noise variance");
    if (!(lipschitz_ > 0.0)) throw ParameterError("Lipschitz constant must be positive");
  }

  const std::string& name() const { return name_; }
  int dimension() const { return dimension_; }
  const NoiseModel& noise() const { return noise_; }
  double variance_bound() const { return variance_bound_; }
  double lipschitz_grad() const { return lipschitz_; }
  double lower_bound() const { return f_min_; }
  const Box& domain_box() const { return box_; }

  bool in_domain(const Vector& x) const { return box_.contains(x); }

  double true_value(const Vector& x) const { return value_(x); }
  Vector true_gradient(const Vector& x) const { return gradient_(x); }

  // One realization f_Theta(x).
  double sample(const Vector& x, RandomStream& rng) const {
    require_domain(x);
    return value_(x) + noise_.draw(rng);
  }

  void require_domain(const Vector& x) const {
    if (!in_domain(x)) throw DomainError(name_ + ": point outside the certified domain box");
  }

  // Replace the declared variance bound (must still dominate the noise).
  StochasticProblem with_variance_bound(double v) const {
    StochasticProblem copy = *this;
    if (!(v >= noise_.variance())) throw ParameterError("variance bound must dominate the noise variance");
    copy.variance_bound_ = v;
    return copy;
  }

  // Same objective and oracles under another noise model; the variance bound
  // becomes that model's variance.
  StochasticProblem with_noise(NoiseModel noise) const {
    StochasticProblem copy = *this;
    copy.noise_ = noise;
    copy.variance_bound_ = noise.variance();
    return copy;
  }

 private:
  std::string name_;
  int dimension_;
  ValueFn value_;
  GradientFn gradient_;
  NoiseModel noise_;
  double variance_bound_;
  double lipschitz_;
  double f_min_;
  Box box_;
};

inline double sample(const StochasticProblem& problem, const Vector& x, RandomStream& rng) {
  return problem.sample(x, rng);
}

// Description of a test problem, as read from an experiment config.
struct ProblemSpec {
  std::string name = "sphere";  // sphere | quadratic | rosenbrock
  int dimension = 2;
  double condition_number = 10.0;  // quadratic only
  NoiseModel noise;
  double box_lower = -10.0;
  double box_upper = 10.0;
  double variance_bound = -1.0;  // < 0: use the noise model's variance
};

namespace detail {

inline double rosenbrock_value(const Vector& x) {
  double f = 0.0;
  for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
    const double a = x[i + 1] - x[i] * x[i];
    const double b = 1.0 - x[i];
    f += 100.0 * a * a + b * b;
  }
  return f;
}

inline Vector rosenbrock_gradient(const Vector& x) {
  Vector g = Vector::Zero(x.size());
  for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
    const double a = x[i + 1] - x[i] * x[i];
    g[i] += -400.0 * x[i] * a - 2.0 * (1.0 - x[i]);
    g[i + 1] += 200.0 * a;
  }
  return g;
}

// Spectral norm of the 2-d Rosenbrock Hessian at (x, y).
inline double rosenbrock_hessian_norm(double x, double y) {
  const double a = 1200.0 * x * x - 400.0 * y + 2.0;
  const double b = -400.0 * x;
  const double d = 200.0;
  const double mean = 0.5 * (a + d);
  const double rad = std::sqrt(0.25 * (a - d) * (a - d) + b * b);
  return std::max(std::abs(mean + rad), std::abs(mean - rad));
}

}  // namespace detail

// Grid resolution used to certify the Rosenbrock Lipschitz constant.
inline constexpr int kRosenbrockGrid = 401;
inline constexpr double kRosenbrockSafety = 1.1;

inline StochasticProblem make_problem(const ProblemSpec& spec) {
  const int n = spec.dimension;
  if (n <= 0) throw ParameterError("problem dimension must be positive");
  if (!(spec.box_lower < spec.box_upper)) throw ParameterError("empty domain box");
  const Box box = Box::cube(n, spec.box_lower, spec.box_upper);
  const double v = spec.variance_bound < 0.0 ? spec.noise.variance() : spec.variance_bound;

  if (spec.name == "sphere") {
    return StochasticProblem(
        "sphere", n, [](const Vector& x) { return 0.5 * x.squaredNorm(); },
        [](const Vector& x) { return Vector(x); }, spec.noise, v, 1.0, 0.0, box);
  }

  if (spec.name == "quadratic") {
    if (!(spec.condition_number >= 1.0)) throw ParameterError("quadratic: condition number must be >= 1");
    // Eigenvalues spaced geometrically in [1, cond], rotated by a fixed orthogonal matrix.
    Vector eig(n);
    for (int i = 0; i < n; ++i)
      eig[i] = n == 1 ? 1.0 : std::pow(spec.condition_number, static_cast<double>(i) / (n - 1));
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = std::cos(1.0 + i + 2.0 * j);
    const Matrix q = Eigen::HouseholderQR<Matrix>(m).householderQ();
    auto hessian = std::make_shared<const Matrix>(q * eig.asDiagonal() * q.transpose());
    const double lip = Eigen::SelfAdjointEigenSolver<Matrix>(*hessian).eigenvalues().cwiseAbs().maxCoeff();
    return StochasticProblem(
        "quadratic", n, [hessian](const Vector& x) { return 0.5 * x.dot(*hessian * x); },
        [hessian](const Vector& x) { return Vector(*hessian * x); }, spec.noise, v, lip, 0.0, box);
  }

  if (spec.name == "rosenbrock") {
    if (n != 2) throw UnsupportedError("rosenbrock: only the 2-d problem is certified");
    double worst = 0.0;
    for (int i = 0; i < kRosenbrockGrid; ++i)
      for (int j = 0; j < kRosenbrockGrid; ++j) {
        const double x = spec.box_lower + (spec.box_upper - spec.box_lower) * i / (kRosenbrockGrid - 1);
        const double y = spec.box_lower + (spec.box_upper - spec.box_lower) * j / (kRosenbrockGrid - 1);
        worst = std::max(worst, detail::rosenbrock_hessian_norm(x, y));
      }
    return StochasticProblem("rosenbrock", n, detail::rosenbrock_value, detail::rosenbrock_gradient,
                             spec.noise, v, kRosenbrockSafety * worst, 0.0, box);
  }

  throw ParameterError("unknown problem '" + spec.name + "'");
}

}  // namespace sdds
