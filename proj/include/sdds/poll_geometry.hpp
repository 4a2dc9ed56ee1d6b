#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "sdds/blackbox.hpp"
#include "sdds/errors.hpp"
#include "sdds/random.hpp"

namespace sdds {

// Largest dimension for which the cosine measure interval is certified.
inline constexpr int kMaxCertifiedDimension = 6;
inline constexpr double kDefaultKappaTol = 1e-3;

// A positive spanning set with its cosine measure and norm bounds.
struct DirectionSet {
  std::vector<Vector> directions;
  double kappa = 0.0;
  bool kappa_is_exact = false;
  double d_min = 0.0;
  double d_max = 0.0;

  int dimension() const { return directions.empty() ? 0 : static_cast<int>(directions.front().size()); }
  std::size_t size() const { return directions.size(); }
};

// max_d v.d / (|v| |d|)
inline double max_alignment(const std::vector<Vector>& directions, const Vector& v) {
  const double vn = v.norm();
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& d : directions) best = std::max(best, v.dot(d) / (vn * d.norm()));
  return best;
}

struct CosineInterval {
  double lower = 0.0;
  double upper = 0.0;
  bool positive_spanning = false;
  Vector witness;  // a unit v with max_alignment(D, v) == upper (up to rounding)

  double width() const { return upper - lower; }
};

namespace detail {

inline void check_directions(const std::vector<Vector>& directions) {
  if (directions.empty()) throw ParameterError("direction set is empty");
  const auto n = directions.front().size();
  if (n == 0) throw ParameterError("directions must have positive dimension");
  for (const auto& d : directions) {
    if (d.size() != n) throw ParameterError("directions have inconsistent dimensions");
    if (!(d.norm() > 0.0)) throw ParameterError("direction set contains a zero direction");
  }
}

// Calls fn(indices) for every k-subset of {0..m-1} in lexicographic order.
template <typename Fn>
void for_each_subset(int m, int k, Fn&& fn) {
  if (k < 0 || k > m) return;
  std::vector<int> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    fn(idx);
    int i = k - 1;
    while (i >= 0 && idx[static_cast<std::size_t>(i)] == m - k + i) --i;
    if (i < 0) return;
    ++idx[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
}

inline double binomial(int m, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (m - k + i) / i;
  return r;
}

inline Matrix normalized_columns(const std::vector<Vector>& directions) {
  const auto n = directions.front().size();
  Matrix u(n, static_cast<Eigen::Index>(directions.size()));
  for (std::size_t j = 0; j < directions.size(); ++j)
    u.col(static_cast<Eigen::Index>(j)) = directions[j] / directions[j].norm();
  return u;
}

inline Matrix select_columns(const Matrix& u, const std::vector<int>& idx) {
  Matrix s(u.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) s.col(static_cast<Eigen::Index>(j)) = u.col(idx[j]);
  return s;
}

inline constexpr double kFeasTol = 1e-10;

// A nonzero r with u_j . r <= 0 for all j, if one exists (D not positively spanning).
inline bool find_recession_direction(const Matrix& u, Vector& r_out) {
  const auto n = static_cast<int>(u.rows());
  const auto m = static_cast<int>(u.cols());
  Eigen::FullPivLU<Matrix> transposed(u.transpose());
  if (transposed.rank() < n) {
    r_out = transposed.kernel().col(0).normalized();
    return true;
  }
  // With full rank, a nontrivial recession cone has an extreme ray cut out by
  // n-1 linearly independent active constraints.
  bool found = false;
  for_each_subset(m, n - 1, [&](const std::vector<int>& idx) {
    if (found) return;
    Vector r;
    if (n == 1) {
      r = Vector::Ones(1);
    } else {
      const Matrix a = select_columns(u, idx).transpose();
      Eigen::FullPivLU<Matrix> lu(a);
      if (lu.rank() != n - 1) return;
      r = lu.kernel().col(0);
      r.normalize();
    }
    for (double sign : {1.0, -1.0}) {
      const Vector cand = sign * r;
      if ((u.transpose() * cand).maxCoeff() <= kFeasTol) {
        r_out = cand;
        found = true;
        return;
      }
    }
  });
  return found;
}

}  // namespace detail

// Exact cosine measure by enumeration.
//  - positive spanning: kappa = 1 / max |w| over the vertices of
//    {w : u_j . w <= 1}, found by solving every n x n active system;
//  - otherwise: kappa = -dist(0, conv{u_j}), found from the affine min-norm
//    point of every subset of at most n+1 normalized directions.
// Intended for desk-scale sets (n <= 6, a few dozen directions).
inline CosineInterval exact_cosine_measure(const std::vector<Vector>& directions) {
  detail::check_directions(directions);
  const Matrix u = detail::normalized_columns(directions);
  const auto n = static_cast<int>(u.rows());
  const auto m = static_cast<int>(u.cols());
  if (detail::binomial(m, std::min(n + 1, m)) > 5e6)
    throw UnsupportedError("cosine measure: direction set too large for enumeration");

  CosineInterval out;
  Vector recession;
  if (!detail::find_recession_direction(u, recession)) {
    double best_norm = 0.0;
    Vector best_w;
    detail::for_each_subset(m, n, [&](const std::vector<int>& idx) {
      const Matrix b = detail::select_columns(u, idx);
      Eigen::FullPivLU<Matrix> lu(b.transpose());
      if (lu.rank() != n) return;
      const Vector w = lu.solve(Vector::Ones(n));
      if ((u.transpose() * w).maxCoeff() > 1.0 + detail::kFeasTol) return;
      const double norm = w.norm();
      if (norm > best_norm) {
        best_norm = norm;
        best_w = w;
      }
    });
    if (best_norm == 0.0) throw std::logic_error("cosine measure: bounded polytope without vertices");
    out.positive_spanning = true;
    out.witness = best_w / best_norm;
    out.upper = max_alignment(directions, out.witness);
    out.lower = 1.0 / best_norm;
    if (out.upper < out.lower) std::swap(out.upper, out.lower);
    return out;
  }

  // Not positive spanning.
  double best = std::numeric_limits<double>::infinity();
  Vector closest;
  for (int k = 1; k <= std::min(n + 1, m); ++k) {
    detail::for_each_subset(m, k, [&](const std::vector<int>& idx) {
      const Matrix s = detail::select_columns(u, idx);
      Matrix kkt = Matrix::Zero(k + 1, k + 1);
      kkt.topLeftCorner(k, k) = s.transpose() * s;
      kkt.block(0, k, k, 1).setOnes();
      kkt.block(k, 0, 1, k).setOnes();
      Vector rhs = Vector::Zero(k + 1);
      rhs[k] = 1.0;
      Eigen::FullPivLU<Matrix> lu(kkt);
      if (lu.rank() != k + 1) return;
      const Vector sol = lu.solve(rhs);
      if (sol.head(k).minCoeff() < -1e-12) return;
      const Vector point = s * sol.head(k);
      const double dist = point.norm();
      if (dist < best) {
        best = dist;
        closest = point;
      }
    });
  }
  out.positive_spanning = false;
  if (best > 1e-12) {
    out.witness = -closest / best;
    out.lower = -best;
  } else {
    out.witness = recession.normalized();
    out.lower = 0.0;
  }
  out.upper = max_alignment(directions, out.witness);
  out.lower = std::min(out.lower, out.upper);
  return out;
}

struct SamplingOptions {
  int samples_per_dimension = 4000;
  int starts = 8;
  std::uint64_t seed = 0x5eedc05e;
};

struct SampledCosine {
  double value = 0.0;  // an upper bound on kappa
  Vector witness;
};

namespace detail {

// Projected descent on a log-sum-exp smoothing of max_j u_j . v over the
// unit sphere, with a decreasing temperature, then an active-set polish.
inline Vector refine_alignment(const Matrix& u, Vector v) {
  const auto m = u.cols();
  for (double temp : {1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4}) {
    for (int it = 0; it < 300; ++it) {
      const Vector a = u.transpose() * v;
      const double top = a.maxCoeff();
      Vector w(m);
      for (Eigen::Index j = 0; j < m; ++j) w[j] = std::exp((a[j] - top) / temp);
      w /= w.sum();
      Vector g = u * w;
      g -= g.dot(v) * v;
      if (g.norm() < 1e-14) break;
      v -= 0.5 * temp * g;
      v.normalize();
    }
  }
  const Vector a = u.transpose() * v;
  const double top = a.maxCoeff();
  std::vector<int> active;
  for (Eigen::Index j = 0; j < m; ++j)
    if (a[j] >= top - 1e-3) active.push_back(static_cast<int>(j));
  const Matrix s = select_columns(u, active);
  const Vector w = s.transpose().completeOrthogonalDecomposition().solve(
      Vector::Ones(static_cast<Eigen::Index>(active.size())));
  if (w.norm() > 0.0 && std::isfinite(w.norm())) {
    const Vector cand = w.normalized();
    if ((u.transpose() * cand).maxCoeff() < top) return cand;
  }
  return v;
}

}  // namespace detail

// Numeric estimate of the cosine measure: dense random sampling of the unit
// sphere followed by multi-start local refinement. Returns an achieved value,
// hence an upper bound on kappa.
inline SampledCosine sampled_cosine_measure(const std::vector<Vector>& directions,
                                            const SamplingOptions& opt = {}) {
  detail::check_directions(directions);
  const Matrix u = detail::normalized_columns(directions);
  const auto n = u.rows();
  RandomStream rng(opt.seed);

  const int total = std::max(1, opt.samples_per_dimension * static_cast<int>(n));
  std::vector<std::pair<double, Vector>> best;  // sorted ascending, at most opt.starts
  for (int i = 0; i < total; ++i) {
    Vector v(n);
    for (Eigen::Index k = 0; k < n; ++k) v[k] = rng.normal();
    if (!(v.norm() > 0.0)) continue;
    v.normalize();
    const double g = (u.transpose() * v).maxCoeff();
    if (static_cast<int>(best.size()) < opt.starts || g < best.back().first) {
      best.emplace_back(g, v);
      std::sort(best.begin(), best.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      if (static_cast<int>(best.size()) > opt.starts) best.pop_back();
    }
  }

  SampledCosine out{std::numeric_limits<double>::infinity(), Vector()};
  for (const auto& [g0, v0] : best) {
    const Vector v = n == 1 ? v0 : detail::refine_alignment(u, v0);
    const double g = max_alignment(directions, v);
    const double start = max_alignment(directions, v0);
    if (g < out.value) out = {g, v};
    if (start < out.value) out = {start, v0};
  }
  return out;
}

// Interval [lower, upper] containing kappa(D). The lower end comes from the
// enumeration route, the upper end from the sampled route (or the
// enumeration witness when sampling is looser than tol).
namespace detail {

// Positive multiples of exactly {+e_1, ..., +e_n, -e_1, ..., -e_n}, any order.
inline bool is_coordinate_family(const std::vector<Vector>& directions) {
  const auto n = directions.front().size();
  if (directions.size() != static_cast<std::size_t>(2 * n)) return false;
  std::vector<int> seen(2 * n, 0);
  for (const auto& d : directions) {
    Eigen::Index nz = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d[i] == 0.0) continue;
      if (nz >= 0) return false;
      nz = i;
    }
    if (nz < 0) return false;
    if (++seen[static_cast<std::size_t>(nz + (d[nz] > 0.0 ? 0 : n))] > 1) return false;
  }
  return true;
}

}  // namespace detail

inline CosineInterval cosine_measure(const std::vector<Vector>& directions, double tol = kDefaultKappaTol) {
  detail::check_directions(directions);
  if (!(tol > 0.0)) throw ParameterError("cosine measure: tol must be positive");
  const int n = static_cast<int>(directions.front().size());
  if (n > kMaxCertifiedDimension)
    throw UnsupportedError("cosine measure: dimension " + std::to_string(n) + " above certified range");

  if (detail::is_coordinate_family(directions)) {
    CosineInterval out;
    out.lower = out.upper = 1.0 / std::sqrt(static_cast<double>(n));
    out.positive_spanning = true;
    out.witness = Vector::Constant(n, -1.0 / std::sqrt(static_cast<double>(n)));
    return out;
  }

  CosineInterval exact = exact_cosine_measure(directions);
  const SampledCosine sampled = sampled_cosine_measure(directions);
  // Rounding slack: both routes agree to ~1e-15 on an exact vertex.
  const double lower = exact.lower - 1e-12;
  CosineInterval out = exact;
  out.lower = lower;
  if (sampled.value - lower <= tol && sampled.value >= lower) {
    out.upper = sampled.value;
    out.witness = sampled.witness;
  } else {
    out.upper = std::max(exact.upper, lower);
  }
  return out;
}

inline CosineInterval cosine_measure(const DirectionSet& set, double tol = kDefaultKappaTol) {
  if (set.kappa_is_exact) {
    CosineInterval out;
    out.lower = out.upper = set.kappa;
    out.positive_spanning = set.kappa > 0.0;
    return out;
  }
  return cosine_measure(set.directions, tol);
}

namespace detail {

inline void fill_norms(DirectionSet& set) {
  set.d_min = std::numeric_limits<double>::infinity();
  set.d_max = 0.0;
  for (const auto& d : set.directions) {
    set.d_min = std::min(set.d_min, d.norm());
    set.d_max = std::max(set.d_max, d.norm());
  }
}

}  // namespace detail

// A direction set whose kappa is the certified lower end of cosine_measure.
inline DirectionSet make_direction_set(std::vector<Vector> directions) {
  detail::check_directions(directions);
  DirectionSet set;
  set.directions = std::move(directions);
  detail::fill_norms(set);
  if (set.dimension() <= kMaxCertifiedDimension) {
    set.kappa = exact_cosine_measure(set.directions).lower;
  } else {
    set.kappa = 0.0;  // unknown above the certified range
  }
  set.kappa_is_exact = false;
  return set;
}

// {+e_1, ..., +e_n, -e_1, ..., -e_n}, kappa = 1/sqrt(n).
inline DirectionSet coordinate_basis(int n) {
  if (n < 1) throw ParameterError("coordinate basis: dimension must be >= 1");
  DirectionSet set;
  for (int i = 0; i < n; ++i) set.directions.push_back(Vector::Unit(n, i));
  for (int i = 0; i < n; ++i) set.directions.push_back(-Vector::Unit(n, i));
  set.kappa = 1.0 / std::sqrt(static_cast<double>(n));
  set.kappa_is_exact = true;
  set.d_min = set.d_max = 1.0;
  return set;
}

// {e_1, ..., e_n, -(e_1 + ... + e_n)/sqrt(n)}: n+1 unit directions.
inline DirectionSet minimal_basis(int n) {
  if (n < 1) throw ParameterError("minimal basis: dimension must be >= 1");
  std::vector<Vector> dirs;
  for (int i = 0; i < n; ++i) dirs.push_back(Vector::Unit(n, i));
  dirs.push_back(-Vector::Ones(n) / std::sqrt(static_cast<double>(n)));
  DirectionSet set = make_direction_set(std::move(dirs));
  set.d_min = set.d_max = 1.0;
  if (n == 1) set.kappa_is_exact = true;
  return set;
}

// Haar-distributed orthogonal matrix (QR of a Gaussian matrix, sign-fixed).
inline Matrix random_orthogonal(int n, RandomStream& rng) {
  Matrix g(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

// The coordinate basis mapped through an orthogonal matrix; kappa is unchanged.
inline DirectionSet rotated_basis(const Matrix& rotation) {
  const auto n = static_cast<int>(rotation.rows());
  DirectionSet set = coordinate_basis(n);
  for (auto& d : set.directions) d = rotation * d;
  detail::fill_norms(set);
  return set;
}

inline DirectionSet rotated_basis(int n, RandomStream& rng) {
  if (n < 1) throw ParameterError("rotated basis: dimension must be >= 1");
  return rotated_basis(random_orthogonal(n, rng));
}

struct SpanningReport {
  bool ok = false;
  CosineInterval kappa;
  std::vector<std::string> failures;
};

// True iff the kappa lower bound exceeds kappa_min and all norms lie in
// [d_min_req, d_max_req].
inline SpanningReport validate_spanning(const std::vector<Vector>& directions, double kappa_min,
                                        double d_min_req, double d_max_req,
                                        double tol = kDefaultKappaTol) {
  SpanningReport rep;
  if (directions.empty()) {
    rep.failures.push_back("empty direction set");
    return rep;
  }
  for (std::size_t j = 0; j < directions.size(); ++j) {
    const double norm = directions[j].norm();
    if (!(norm >= d_min_req && norm <= d_max_req))
      rep.failures.push_back("direction " + std::to_string(j) + " has norm " + std::to_string(norm) +
                             " outside [" + std::to_string(d_min_req) + ", " + std::to_string(d_max_req) + "]");
  }
  if (!rep.failures.empty()) return rep;
  try {
    rep.kappa = cosine_measure(directions, tol);
  } catch (const std::exception& e) {
    rep.failures.push_back(e.what());
    return rep;
  }
  if (!(rep.kappa.lower > kappa_min))
    rep.failures.push_back("cosine measure lower bound " + std::to_string(rep.kappa.lower) +
                           " does not exceed kappa_min " + std::to_string(kappa_min));
  rep.ok = rep.failures.empty();
  return rep;
}

inline SpanningReport validate_spanning(const DirectionSet& set, double kappa_min, double d_min_req,
                                        double d_max_req, double tol = kDefaultKappaTol) {
  if (!set.kappa_is_exact) return validate_spanning(set.directions, kappa_min, d_min_req, d_max_req, tol);
  SpanningReport rep;
  rep.kappa = cosine_measure(set, tol);
  for (std::size_t j = 0; j < set.directions.size(); ++j) {
    const double norm = set.directions[j].norm();
    if (!(norm >= d_min_req && norm <= d_max_req))
      rep.failures.push_back("direction " + std::to_string(j) + " norm out of range");
  }
  if (!(rep.kappa.lower > kappa_min)) rep.failures.push_back("cosine measure does not exceed kappa_min");
  rep.ok = rep.failures.empty();
  return rep;
}

}  // namespace sdds
