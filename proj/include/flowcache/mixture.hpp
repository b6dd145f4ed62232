#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowcache/backbone.hpp"
#include "flowcache/core.hpp"
#include "flowcache/rng.hpp"

namespace flowcache {

// Target distribution: mixture of isotropic Gaussians over flattened point
// coordinates. sigma == 0 degenerates to a point mass at the mean.
template <typename Real>
struct MixtureComponent {
  Real weight = Real(1);
  std::vector<Real> mean;  // flattened (n_nodes x 3), row-major
  Real sigma = Real(0);
};

template <typename Real>
struct MixtureSpec {
  int n_nodes = 0;
  std::vector<MixtureComponent<Real>> components;
};

template <typename Real>
void validate(const MixtureSpec<Real>& spec) {
  if (spec.n_nodes < 1) throw std::invalid_argument("mixture: n_nodes must be >= 1");
  if (spec.components.empty()) throw std::invalid_argument("mixture: needs at least one component");
  const std::size_t dim = static_cast<std::size_t>(spec.n_nodes) * 3;
  double total = 0.0;
  for (std::size_t j = 0; j < spec.components.size(); ++j) {
    const auto& c = spec.components[j];
    const std::string where = "mixture component " + std::to_string(j);
    if (!(c.weight > Real(0))) throw std::invalid_argument(where + ": weight must be > 0");
    if (c.mean.size() != dim)
      throw std::invalid_argument(where + ": mean has " + std::to_string(c.mean.size()) +
                                  " entries, expected " + std::to_string(dim));
    if (!(c.sigma >= Real(0))) throw std::invalid_argument(where + ": sigma must be >= 0");
    for (Real m : c.mean)
      if (!std::isfinite(static_cast<double>(m)))
        throw std::invalid_argument(where + ": mean has non-finite entries");
    total += static_cast<double>(c.weight);
  }
  const double tol = sizeof(Real) >= 8 ? 1e-9 : 1e-4;
  if (std::abs(total - 1.0) > tol)
    throw std::invalid_argument("mixture: weights sum to " + std::to_string(total) +
                                ", expected 1");
}

// Marginal velocity of the straight-interpolant flow x_t = (1-t) x_0 + t x_1
// with x_0 standard normal and x_1 drawn from the mixture. Each component
// contributes its posterior-mean velocity, blended by the posterior
// probability that x_t came from that component. Closed form:
//   s_j^2(t) = (1-t)^2 + t^2 sigma_j^2
//   u_j(x,t) = mu_j + (t sigma_j^2 - (1-t)) / s_j^2 * (x - t mu_j)
//   log gamma_j = log w_j - |x - t mu_j|^2 / (2 s_j^2) - (d/2) log s_j^2  (+ softmax)
// Requires t < 1; t above 1 - clamp_eps is clamped down and counted.
template <typename Real>
std::vector<Real> mixture_velocity(const MixtureSpec<Real>& spec, const std::vector<Real>& x,
                                   Real t, Real clamp_eps = Real(1e-4),
                                   std::atomic<long>* clamp_events = nullptr) {
  const std::size_t dim = static_cast<std::size_t>(spec.n_nodes) * 3;
  if (x.size() != dim)
    throw ShapeError("mixture_velocity: state has " + std::to_string(x.size()) +
                     " coordinates, expected " + std::to_string(dim));
  if (!(t >= Real(0)))
    throw std::domain_error("mixture_velocity: t must be >= 0");
  if (t >= Real(1))
    throw std::domain_error("mixture_velocity: t must be < 1");
  if (t > Real(1) - clamp_eps) {
    t = Real(1) - clamp_eps;
    if (clamp_events) clamp_events->fetch_add(1, std::memory_order_relaxed);
  }

  const std::size_t m = spec.components.size();
  std::vector<double> log_gamma(m);
  std::vector<std::vector<Real>> u(m, std::vector<Real>(dim));
  const double td = static_cast<double>(t);
  for (std::size_t j = 0; j < m; ++j) {
    const auto& c = spec.components[j];
    const double sig2 = static_cast<double>(c.sigma) * static_cast<double>(c.sigma);
    const double s2 = (1.0 - td) * (1.0 - td) + td * td * sig2;
    const double slope = (td * sig2 - (1.0 - td)) / s2;
    double r2 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double r = static_cast<double>(x[i]) - td * static_cast<double>(c.mean[i]);
      r2 += r * r;
      u[j][i] = c.mean[i] + static_cast<Real>(slope * r);
    }
    log_gamma[j] = std::log(static_cast<double>(c.weight)) - r2 / (2.0 * s2) -
                   0.5 * static_cast<double>(dim) * std::log(s2);
  }

  double max_lg = log_gamma[0];
  for (double lg : log_gamma) max_lg = std::max(max_lg, lg);
  double z = 0.0;
  for (double& lg : log_gamma) {
    lg = std::exp(lg - max_lg);
    z += lg;
  }

  std::vector<Real> v(dim, Real(0));
  for (std::size_t j = 0; j < m; ++j) {
    const Real g = static_cast<Real>(log_gamma[j] / z);
    for (std::size_t i = 0; i < dim; ++i) v[i] += g * u[j][i];
  }
  return v;
}

// Vector field wrapper: velocity acts on the points channel, invariant
// channels get zero velocity. Thread-safe; the clamp counter is shared.
template <typename Real>
class MixtureField : public VectorField<Real> {
 public:
  explicit MixtureField(MixtureSpec<Real> spec, Real clamp_eps = Real(1e-4))
      : spec_(std::move(spec)), clamp_eps_(clamp_eps) {
    validate(spec_);
    if (!(clamp_eps_ > Real(0) && clamp_eps_ < Real(1)))
      throw std::invalid_argument("mixture: clamp_eps must lie in (0, 1)");
  }

  const MixtureSpec<Real>& spec() const { return spec_; }
  int block_count() const override { return 1; }
  long clamp_events() const { return clamp_events_.load(std::memory_order_relaxed); }

  Tangent<Real> evaluate(const State<Real>& s, Real t) const override {
    check_eval_args(s, t);
    if (s.n_nodes != spec_.n_nodes)
      throw ShapeError("mixture field built for " + std::to_string(spec_.n_nodes) +
                       " nodes, state has " + std::to_string(s.n_nodes));
    Tangent<Real> out = zero_tangent(s);
    const int pi = s.points_index();
    out.channels[static_cast<std::size_t>(pi)].data =
        mixture_velocity(spec_, s.channels[static_cast<std::size_t>(pi)].data, t, clamp_eps_,
                         &clamp_events_);
    return out;
  }

  // Draws flattened coordinates from the target mixture.
  std::vector<Real> sample_target(Rng& rng) const {
    double pick = rng.uniform();
    std::size_t j = 0;
    for (; j + 1 < spec_.components.size(); ++j) {
      pick -= static_cast<double>(spec_.components[j].weight);
      if (pick <= 0.0) break;
    }
    const auto& c = spec_.components[j];
    std::vector<Real> x(c.mean);
    if (c.sigma > Real(0))
      for (auto& xi : x) xi += static_cast<Real>(static_cast<double>(c.sigma) * rng.normal());
    return x;
  }

 private:
  MixtureSpec<Real> spec_;
  Real clamp_eps_;
  mutable std::atomic<long> clamp_events_{0};
};

}  // namespace flowcache
