#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowcache/cache.hpp"
#include "flowcache/core.hpp"
#include "flowcache/sampler.hpp"

namespace flowcache {

// Flattened copies for distribution- and projection-level comparisons.
template <typename Real>
std::vector<double> flatten(const State<Real>& s) {
  std::vector<double> out;
  std::size_t total = 0;
  for (const auto& ch : s.channels) total += ch.data.size();
  out.reserve(total);
  for (const auto& ch : s.channels)
    for (Real v : ch.data) out.push_back(static_cast<double>(v));
  return out;
}

template <typename Real>
std::vector<double> flatten_points(const State<Real>& s) {
  const auto& pts = s.points();
  return std::vector<double>(pts.data.begin(), pts.data.end());
}

// Coordinates with the center of mass removed, for distributional metrics
// that should not see translation drift.
template <typename Real>
std::vector<double> centered_points(const State<Real>& s) {
  std::vector<double> x = flatten_points(s);
  const std::size_t n = x.size() / 3;
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x[i * 3 + c];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) x[i * 3 + c] -= mean;
  }
  return x;
}

namespace detail {

inline double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// Mean pairwise distance over ALL ordered pairs (including i == j). Keeping
// the i == j zero terms makes the three sums in energy_distance share one
// summation order, so E(a, a) cancels to exactly zero in floating point.
inline double mean_cross_distance(const std::vector<std::vector<double>>& a,
                                  const std::vector<std::vector<double>>& b) {
  double s = 0.0;
  for (const auto& ai : a)
    for (const auto& bj : b) s += euclidean(ai, bj);
  return s / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

}  // namespace detail

// Energy distance between two sample sets:
//   E = 2 mean|a - b| - mean|a - a'| - mean|b - b'|
// V-statistic form (self pairs included), nonnegative, zero iff the
// distributions coincide in the infinite-sample limit. Note the self terms
// carry a finite-sample bias of about 2 mean|x - x'| / n each.
inline double energy_distance(const std::vector<std::vector<double>>& a,
                              const std::vector<std::vector<double>>& b) {
  if (a.empty() || b.empty()) throw ShapeError("energy_distance: empty sample set");
  const std::size_t dim = a.front().size();
  for (const auto& v : a)
    if (v.size() != dim) throw ShapeError("energy_distance: ragged sample set");
  for (const auto& v : b)
    if (v.size() != dim)
      throw ShapeError("energy_distance: dimension mismatch between sets (" +
                       std::to_string(dim) + " vs " + std::to_string(v.size()) + ")");
  const double cross = detail::mean_cross_distance(a, b);
  const double self_a = detail::mean_cross_distance(a, a);
  const double self_b = detail::mean_cross_distance(b, b);
  return 2.0 * cross - self_a - self_b;
}

// Normalized residual of two-point linear extrapolation:
//   e_k = |F_k - (2 F_{k-1} - F_{k-2})| / max(|F_k|, 1e-12), defined for k >= 2.
// Entries for k < 2 are zero. Exactly zero on any degree <= 1 series.
inline std::vector<double> linear_predictability_error(
    const std::vector<std::vector<double>>& series) {
  if (series.size() < 3)
    throw std::invalid_argument("linear_predictability_error: needs at least 3 recorded steps");
  const std::size_t dim = series.front().size();
  for (const auto& v : series)
    if (v.size() != dim) throw ShapeError("linear_predictability_error: ragged series");
  std::vector<double> e(series.size(), 0.0);
  std::vector<double> pred(dim);
  for (std::size_t k = 2; k < series.size(); ++k) {
    for (std::size_t i = 0; i < dim; ++i)
      pred[i] = 2.0 * series[k - 1][i] - series[k - 2][i];
    const double num = detail::euclidean(series[k], pred);
    double fk = 0.0;
    for (double v : series[k]) fk += v * v;
    e[k] = num / std::max(std::sqrt(fk), 1e-12);
  }
  return e;
}

template <typename Real>
std::vector<std::vector<double>> flatten_velocities(const TrajectoryRecord<Real>& traj) {
  std::vector<std::vector<double>> out;
  out.reserve(traj.velocities.size());
  for (const auto& v : traj.velocities) {
    std::vector<double> row;
    std::size_t total = 0;
    for (const auto& ch : v.channels) total += ch.data.size();
    row.reserve(total);
    for (const auto& ch : v.channels)
      for (Real x : ch.data) row.push_back(static_cast<double>(x));
    out.push_back(std::move(row));
  }
  return out;
}

// Per-step distance between the points channels of two same-grid runs.
// Raw coordinates, no rigid alignment: both runs share the initial state, so
// the symmetry frame is already matched.
template <typename Real>
std::vector<double> trajectory_deviation(const TrajectoryRecord<Real>& base,
                                         const TrajectoryRecord<Real>& cached) {
  if (base.times.size() != cached.times.size())
    throw std::invalid_argument("trajectory_deviation: step counts differ");
  for (std::size_t i = 0; i < base.times.size(); ++i)
    if (base.times[i] != cached.times[i])
      throw std::invalid_argument("trajectory_deviation: time grids differ at index " +
                                  std::to_string(i));
  std::vector<double> d(base.states.size(), 0.0);
  for (std::size_t k = 0; k < base.states.size(); ++k)
    d[k] = detail::euclidean(flatten_points(base.states[k]), flatten_points(cached.states[k]));
  return d;
}

// End-to-end commutation error of the cached sampler with a group action:
// integrate from the transformed start vs transform the integrated result.
// Relative to the norm of the transformed reference final state.
template <typename Real>
double equivariance_error(const VectorField<Real>& field, const CachePolicy& policy,
                          const TimeGrid<Real>& grid, const GroupElement& g,
                          const State<Real>& x0) {
  validate(g, x0.n_nodes);
  const State<Real> ref = apply_group(g, integrate(field, x0, grid, policy).final_state);
  const State<Real> alt = integrate(field, apply_group(g, x0), grid, policy).final_state;
  return state_distance(ref, alt) / std::max(state_norm(ref), 1e-12);
}

struct PcaProjection {
  std::vector<std::array<double, 2>> coords;  // one 2D point per input row
  std::array<double, 2> variances{};          // eigenvalues along the two directions
};

namespace detail {

// v <- top eigenvector of the centered covariance, matrix-free power
// iteration. `deflate` removes an already-found (direction, eigenvalue) pair.
inline double power_iteration(const std::vector<std::vector<double>>& rows,
                              std::vector<double>& v, const std::vector<double>* deflate_dir,
                              double deflate_val) {
  const std::size_t dim = v.size();
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  std::vector<double> next(dim);
  double lambda = 0.0;
  for (int iter = 0; iter < 10000; ++iter) {
    std::fill(next.begin(), next.end(), 0.0);
    for (const auto& r : rows) {
      double dot = 0.0;
      for (std::size_t i = 0; i < dim; ++i) dot += r[i] * v[i];
      for (std::size_t i = 0; i < dim; ++i) next[i] += dot * r[i];
    }
    for (std::size_t i = 0; i < dim; ++i) next[i] *= inv_n;
    if (deflate_dir) {
      double dot = 0.0;
      for (std::size_t i = 0; i < dim; ++i) dot += (*deflate_dir)[i] * v[i];
      for (std::size_t i = 0; i < dim; ++i) next[i] -= deflate_val * dot * (*deflate_dir)[i];
    }
    double norm2 = 0.0;
    for (double x : next) norm2 += x * x;
    lambda = std::sqrt(norm2);
    if (lambda < 1e-300) {
      std::fill(v.begin(), v.end(), 0.0);
      return 0.0;
    }
    double delta = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      next[i] /= lambda;
      delta = std::max(delta, std::abs(next[i] - v[i]));
    }
    v.swap(next);
    if (delta <= 1e-9) break;
  }
  return lambda;
}

}  // namespace detail

// Projects per-step flattened state vectors onto their top two principal
// directions. Directions come from matrix-free power iteration with
// deflation; the sign is fixed by making the largest-magnitude entry
// positive. Throws on a zero-variance trajectory.
inline PcaProjection pca_project(const std::vector<std::vector<double>>& rows) {
  if (rows.size() < 3)
    throw std::invalid_argument("pca_project: needs at least 3 rows for a 2D projection");
  const std::size_t dim = rows.front().size();
  for (const auto& r : rows)
    if (r.size() != dim) throw ShapeError("pca_project: ragged rows");

  std::vector<double> mean(dim, 0.0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < dim; ++i) mean[i] += r[i];
  for (auto& m : mean) m /= static_cast<double>(rows.size());
  std::vector<std::vector<double>> centered(rows.size(), std::vector<double>(dim));
  double total_var = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k)
    for (std::size_t i = 0; i < dim; ++i) {
      centered[k][i] = rows[k][i] - mean[i];
      total_var += centered[k][i] * centered[k][i];
    }
  total_var /= static_cast<double>(rows.size());
  if (total_var <= 1e-300)
    throw std::domain_error("pca_project: zero-variance trajectory, projection undefined");

  // Deterministic start vectors; reseeded per component so a degenerate
  // first direction cannot poison the second.
  auto start = [&](std::uint64_t salt) {
    Rng rng(0x9e3779b97f4a7c15ull ^ salt);
    std::vector<double> v(dim);
    double n2 = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      n2 += x * x;
    }
    for (auto& x : v) x /= std::sqrt(n2);
    return v;
  };
  auto fix_sign = [](std::vector<double>& v) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
      if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
    if (v[arg] < 0.0)
      for (auto& x : v) x = -x;
  };

  std::vector<double> v1 = start(1);
  const double l1 = detail::power_iteration(centered, v1, nullptr, 0.0);
  fix_sign(v1);
  std::vector<double> v2 = start(2);
  const double l2 = detail::power_iteration(centered, v2, &v1, l1);
  fix_sign(v2);

  PcaProjection out;
  out.variances = {l1, l2};
  out.coords.resize(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    double p1 = 0.0, p2 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      p1 += centered[k][i] * v1[i];
      p2 += centered[k][i] * v2[i];
    }
    out.coords[k] = {p1, p2};
  }
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty series");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace flowcache
