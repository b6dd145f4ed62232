// Release gate for the cached-sampler library: ten end-to-end checks, one
// PASS/FAIL line each, nonzero exit when anything fails. Each check carries
// its own wall-clock budget where timing is part of the contract.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "flowcache/backbone.hpp"
#include "flowcache/cache.hpp"
#include "flowcache/core.hpp"
#include "flowcache/metrics.hpp"
#include "flowcache/mixture.hpp"
#include "flowcache/rng.hpp"
#include "flowcache/sampler.hpp"

using namespace flowcache;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

CachePolicy none_policy() { return CachePolicy{}; }
CachePolicy naive(int d) { return CachePolicy{CacheKind::Naive, d, 0, ABMode::OffsetAware}; }
CachePolicy taylor(int d, int m) { return CachePolicy{CacheKind::Taylor, d, m, ABMode::OffsetAware}; }
CachePolicy ab(int d, int j, ABMode mode = ABMode::OffsetAware) {
  return CachePolicy{CacheKind::AdamsBashforth, d, j, mode};
}

Tangent<double> vec_tangent(const std::vector<double>& vals) {
  Tangent<double> t;
  auto ch = make_channel<double>("f", ChannelRole::Node, vals.size(), 1);
  ch.data = vals;
  t.channels = {ch};
  return t;
}

bool states_bit_equal(const State<double>& a, const State<double>& b) {
  if (a.channels.size() != b.channels.size()) return false;
  for (std::size_t c = 0; c < a.channels.size(); ++c)
    if (a.channels[c].data != b.channels[c].data) return false;
  return true;
}

bool trajectories_bit_equal(const TrajectoryRecord<double>& a, const TrajectoryRecord<double>& b) {
  if (a.states.size() != b.states.size() || a.velocities.size() != b.velocities.size())
    return false;
  for (std::size_t k = 0; k < a.states.size(); ++k)
    if (!states_bit_equal(a.states[k], b.states[k])) return false;
  for (std::size_t k = 0; k < a.velocities.size(); ++k)
    for (std::size_t c = 0; c < a.velocities[k].channels.size(); ++c)
      if (a.velocities[k].channels[c].data != b.velocities[k].channels[c].data) return false;
  return true;
}

MixtureSpec<double> point_mass_spec(int n_nodes, std::uint64_t seed, double scale) {
  MixtureSpec<double> spec;
  spec.n_nodes = n_nodes;
  Rng rng(seed);
  MixtureComponent<double> c;
  c.weight = 1.0;
  c.sigma = 0.0;
  c.mean.resize(static_cast<std::size_t>(n_nodes) * 3);
  for (auto& m : c.mean) m = scale * rng.normal();
  spec.components.push_back(std::move(c));
  return spec;
}

MixtureSpec<double> four_mass_spec(int n_nodes, std::uint64_t seed) {
  MixtureSpec<double> spec;
  spec.n_nodes = n_nodes;
  Rng rng(seed);
  for (int j = 0; j < 4; ++j) {
    MixtureComponent<double> c;
    c.weight = 0.25;
    c.sigma = 0.0;
    c.mean.resize(static_cast<std::size_t>(n_nodes) * 3);
    for (auto& m : c.mean) m = 3.0 * rng.normal();
    spec.components.push_back(std::move(c));
  }
  return spec;
}

// Self-normalized importance-sampling estimate of the interpolant velocity:
// proposals x1 from the target mixture, log-weight -|x0|^2/2 for the implied
// base point, velocity sample x1 - x0. Running max-log-weight rescaling keeps
// the accumulators finite; the standard error is the usual ratio-estimator
// form sum w^2 (f - R)^2 / (sum w)^2, per coordinate.
void snis_velocity(const MixtureField<double>& field, const std::vector<double>& x, double t,
                   long n_samples, std::uint64_t seed, std::vector<double>& est,
                   std::vector<double>& se) {
  const std::size_t dim = x.size();
  Rng rng(seed);
  double max_lw = -1e300;
  double sw = 0.0, sw2 = 0.0;
  std::vector<double> swf(dim, 0.0), sw2f(dim, 0.0), sw2f2(dim, 0.0);
  std::vector<double> f(dim);

  for (long s = 0; s < n_samples; ++s) {
    const std::vector<double> x1 = field.sample_target(rng);
    double lw = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double x0 = (x[i] - t * x1[i]) / (1.0 - t);
      f[i] = x1[i] - x0;
      lw -= 0.5 * x0 * x0;
    }
    if (lw > max_lw) {
      const double r = std::exp(max_lw - lw);  // rescale accumulators to the new max
      const double r2 = r * r;
      sw *= r;
      sw2 *= r2;
      for (std::size_t i = 0; i < dim; ++i) {
        swf[i] *= r;
        sw2f[i] *= r2;
        sw2f2[i] *= r2;
      }
      max_lw = lw;
    }
    const double w = std::exp(lw - max_lw);
    const double w2 = w * w;
    sw += w;
    sw2 += w2;
    for (std::size_t i = 0; i < dim; ++i) {
      swf[i] += w * f[i];
      sw2f[i] += w2 * f[i];
      sw2f2[i] += w2 * f[i] * f[i];
    }
  }

  est.assign(dim, 0.0);
  se.assign(dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    const double r = swf[i] / sw;
    est[i] = r;
    const double var = sw2f2[i] - 2.0 * r * sw2f[i] + r * r * sw2;
    se[i] = std::sqrt(std::max(var, 0.0)) / sw;
  }
}

struct Gate {
  int failures = 0;
  int index = 0;

  void run(const std::string& name, double budget_seconds,
           const std::function<bool(std::string&)>& body) {
    ++index;
    std::string detail;
    bool ok = false;
    const double t0 = now_seconds();
    try {
      ok = body(detail);
    } catch (const std::exception& e) {
      ok = false;
      detail = std::string("exception: ") + e.what();
    }
    const double secs = now_seconds() - t0;
    if (ok && budget_seconds > 0.0 && secs > budget_seconds) {
      ok = false;
      detail = "exceeded " + fmt(budget_seconds) + "s budget" +
               (detail.empty() ? "" : "; " + detail);
    }
    std::printf("[%s] %2d %-48s %8.2fs%s%s\n", ok ? "PASS" : "FAIL", index, name.c_str(), secs,
                detail.empty() ? "" : "  ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
};

}  // namespace

int main() {
  Gate gate;
  const int hw = static_cast<int>(std::thread::hardware_concurrency());
  const int threads = std::max(1, std::min(4, hw));

  // 1. Checkpoint counts at K=100 for the documented intervals, through both
  //    the schedule and the sampler's own counters.
  gate.run("checkpoint schedule counts", 1.0, [](std::string& detail) {
    const int want[3][2] = {{2, 51}, {3, 34}, {4, 26}};
    MixtureField<double> field(point_mass_spec(2, 11, 1.0));
    const auto x0 = sample_base<double>(2, 0, 0, 12);
    const auto grid = make_uniform_grid<double>(100);
    for (const auto& w : want) {
      if (static_cast<int>(schedule(100, taylor(w[0], 1)).size()) != w[1]) {
        detail = "schedule size off at interval " + std::to_string(w[0]);
        return false;
      }
      const auto r = integrate(field, x0, grid, taylor(w[0], 1));
      if (r.record.nfe != w[1] || r.record.forecasts != 100 - w[1]) {
        detail = "counter off at interval " + std::to_string(w[0]) + ": nfe " +
                 std::to_string(r.record.nfe);
        return false;
      }
    }
    return true;
  });

  // 2. Forecast exactness on random polynomial checkpoint sequences, at every
  //    offset inside (and slightly past) the cache window.
  gate.run("polynomial forecast exactness", 10.0, [](std::string& detail) {
    Rng rng(2024);
    const int intervals[3] = {2, 3, 5};
    for (int trial = 0; trial < 500; ++trial) {
      const int degree = rng.uniform_int(0, 3);
      const int interval = intervals[rng.uniform_int(0, 2)];
      const int dim = rng.uniform_int(1, 4);
      std::vector<std::vector<double>> coeffs(static_cast<std::size_t>(dim));
      for (auto& c : coeffs) {
        c.resize(static_cast<std::size_t>(degree) + 1);
        for (auto& x : c) x = rng.uniform(-1.0, 1.0);
      }
      auto poly = [&](double s) {
        std::vector<double> v(static_cast<std::size_t>(dim));
        for (int i = 0; i < dim; ++i) {
          double acc = 0.0, p = 1.0;
          for (double c : coeffs[static_cast<std::size_t>(i)]) {
            acc += c * p;
            p *= s;
          }
          v[static_cast<std::size_t>(i)] = acc;
        }
        return v;
      };

      CacheState<double> ty(taylor(interval, rng.uniform_int(degree, 3)));
      CacheState<double> abc(ab(interval, rng.uniform_int(degree + 1, 4)));
      const int n_checkpoints = 6;
      for (int i = 0; i < n_checkpoints; ++i) {
        const auto v = vec_tangent(poly(static_cast<double>(i * interval)));
        ty.refresh(v, i * interval);
        abc.refresh(v, i * interval);
      }
      const double latest = static_cast<double>((n_checkpoints - 1) * interval);
      for (int off = 1; off <= interval + 2; ++off) {
        const auto want = poly(latest + off);
        const auto got_ty = ty.forecast(off);
        const auto got_ab = abc.forecast(off);
        for (int i = 0; i < dim; ++i) {
          const double w = want[static_cast<std::size_t>(i)];
          const double tol = 1e-9 * std::max(1.0, std::abs(w));
          if (std::abs(got_ty.channels[0].data[static_cast<std::size_t>(i)] - w) > tol ||
              std::abs(got_ab.channels[0].data[static_cast<std::size_t>(i)] - w) > tol) {
            detail = "trial " + std::to_string(trial) + " degree " + std::to_string(degree) +
                     " interval " + std::to_string(interval) + " offset " + std::to_string(off);
            return false;
          }
        }
      }
    }
    return true;
  });

  // 3. Zeroth-order forecasters of every family collapse to plain reuse, and
  //    interval 1 collapses to caching off, bit for bit.
  gate.run("forecaster degeneracy chain", 0.0, [](std::string& detail) {
    Rng rng(303);
    IntegrationOptions opts;
    opts.record_trajectory = true;
    for (int trial = 0; trial < 20; ++trial) {
      BackboneConfig cfg;
      cfg.blocks = rng.uniform_int(1, 2);
      cfg.hidden = 4 * rng.uniform_int(1, 2);
      cfg.node_dim = rng.uniform_int(0, 3);
      cfg.edge_dim = rng.uniform_int(0, 2);
      cfg.seed = rng.next_u64();
      EquivariantBackbone<double> field(cfg);
      const int n = rng.uniform_int(2, 5);
      const auto x0 = sample_base<double>(n, cfg.node_dim, cfg.edge_dim, rng.next_u64());
      const auto grid = make_uniform_grid<double>(rng.uniform_int(8, 24));
      const int d = rng.uniform_int(1, 5);

      const auto a = integrate(field, x0, grid, naive(d), opts);
      const auto b = integrate(field, x0, grid, taylor(d, 0), opts);
      const auto c = integrate(field, x0, grid, ab(d, 1, ABMode::PaperExact), opts);
      const auto e = integrate(field, x0, grid, ab(d, 1, ABMode::OffsetAware), opts);
      if (!trajectories_bit_equal(a.trajectory, b.trajectory) ||
          !trajectories_bit_equal(a.trajectory, c.trajectory) ||
          !trajectories_bit_equal(a.trajectory, e.trajectory) ||
          a.record.nfe != b.record.nfe || a.record.nfe != c.record.nfe) {
        detail = "reuse chain split at trial " + std::to_string(trial);
        return false;
      }

      const auto full = integrate(field, x0, grid, none_policy(), opts);
      const auto d1 = integrate(field, x0, grid, taylor(1, rng.uniform_int(0, 3)), opts);
      if (!trajectories_bit_equal(full.trajectory, d1.trajectory)) {
        detail = "interval-1 run differs from caching off at trial " + std::to_string(trial);
        return false;
      }
    }
    return true;
  });

  // 4. End-to-end commutation with rotations, translations, and relabelings
  //    for cached and uncached runs; the absolute-position control must fail.
  gate.run("group equivariance end to end", 120.0, [](std::string& detail) {
    BackboneConfig cfg;
    cfg.blocks = 2;
    cfg.hidden = 8;
    cfg.node_dim = 2;
    cfg.edge_dim = 1;
    cfg.seed = 401;
    EquivariantBackbone<double> field(cfg);
    const auto x0 = sample_base<double>(6, 2, 1, 402);
    const auto grid = make_uniform_grid<double>(50);

    std::vector<GroupElement> probes;
    Rng rng(403);
    for (int i = 0; i < 50; ++i) probes.push_back(random_group_element(rng, 6));

    const CachePolicy policies[] = {none_policy(), taylor(2, 1), taylor(2, 2), ab(2, 2),
                                    ab(2, 3)};
    double worst = 0.0;
    for (const auto& policy : policies) {
      for (const auto& g : probes) {
        const double err = equivariance_error(field, policy, grid, g, x0);
        worst = std::max(worst, err);
        if (err > 1e-6) {
          detail = "error " + fmt(err) + " above 1e-6";
          return false;
        }
      }
    }

    AbsolutePositionField<double> control(404, 8);
    double control_worst = 0.0;
    for (const auto& g : probes)
      control_worst =
          std::max(control_worst, equivariance_error(control, none_policy(), grid, g, x0));
    if (control_worst <= 1e-2) {
      detail = "control field looked equivariant (max " + fmt(control_worst) + ")";
      return false;
    }
    detail = "max " + fmt(worst) + ", control " + fmt(control_worst);
    return true;
  });

  // 5. A point-mass target is transported exactly for every policy family and
  //    interval, with evaluation counts matching the schedule.
  gate.run("point-mass transport", 0.0, [](std::string& detail) {
    const auto spec = point_mass_spec(3, 505, 2.0);
    MixtureField<double> field(spec);
    const auto x0 = sample_base<double>(3, 0, 0, 506);
    const auto grid = make_uniform_grid<double>(100);

    std::vector<CachePolicy> policies = {none_policy()};
    for (int d = 1; d <= 10; ++d) {
      policies.push_back(naive(d));
      policies.push_back(taylor(d, 1));
      policies.push_back(taylor(d, 3));
      policies.push_back(ab(d, 2));
      policies.push_back(ab(d, 2, ABMode::PaperExact));
    }
    for (const auto& policy : policies) {
      const auto r = integrate(field, x0, grid, policy);
      const long want_nfe = static_cast<long>(schedule(100, policy).size());
      if (r.record.nfe != want_nfe || r.record.forecasts != 100 - want_nfe) {
        detail = "evaluation counters off for interval " + std::to_string(policy.interval);
        return false;
      }
      const auto& pts = r.final_state.channels[0].data;
      for (std::size_t i = 0; i < pts.size(); ++i)
        if (std::abs(pts[i] - spec.components[0].mean[i]) > 1e-10) {
          detail = "final state missed the mass for interval " +
                   std::to_string(policy.interval) + " (|err| " +
                   fmt(std::abs(pts[i] - spec.components[0].mean[i])) + ")";
          return false;
        }
    }
    return true;
  });

  // 6. Caching at interval 2 halves the evaluations without degrading the
  //    sampled distribution, across three seed sets.
  gate.run("distribution recovery under caching", 300.0, [threads](std::string& detail) {
    const auto spec = four_mass_spec(8, 606);
    MixtureField<double> field(spec);
    const auto grid = make_uniform_grid<double>(100);
    const int count = 2000;
    std::string summary;

    for (int rep = 0; rep < 3; ++rep) {
      const std::uint64_t base_seed = 1000 + 1000 * static_cast<std::uint64_t>(rep);
      Rng target_rng(707 + static_cast<std::uint64_t>(rep));
      std::vector<std::vector<double>> target;
      target.reserve(count);
      for (int i = 0; i < count; ++i) {
        std::vector<double> draw = field.sample_target(target_rng);
        // Compare shapes, not absolute placement: drop the center of mass.
        const std::size_t n = draw.size() / 3;
        for (std::size_t c = 0; c < 3; ++c) {
          double mean = 0.0;
          for (std::size_t k = 0; k < n; ++k) mean += draw[k * 3 + c];
          mean /= static_cast<double>(n);
          for (std::size_t k = 0; k < n; ++k) draw[k * 3 + c] -= mean;
        }
        target.push_back(std::move(draw));
      }

      const auto base = batch_sample(field, 8, 0, 0, grid, none_policy(), count, base_seed, threads);
      const auto cached = batch_sample(field, 8, 0, 0, grid, taylor(2, 1), count, base_seed, threads);
      if (base.records.front().nfe != 100 || cached.records.front().nfe != 51) {
        detail = "evaluation counts are not 100 vs 51";
        return false;
      }

      std::vector<std::vector<double>> base_pts, cached_pts;
      base_pts.reserve(count);
      cached_pts.reserve(count);
      for (const auto& s : base.finals) base_pts.push_back(centered_points(s));
      for (const auto& s : cached.finals) cached_pts.push_back(centered_points(s));
      const double ed_base = energy_distance(base_pts, target);
      const double ed_cached = energy_distance(cached_pts, target);
      if (!(ed_cached <= 1.2 * ed_base)) {
        detail = "rep " + std::to_string(rep) + ": " + fmt(ed_cached) + " vs base " +
                 fmt(ed_base);
        return false;
      }
      if (!summary.empty()) summary += " ";
      summary += fmt(ed_cached) + "/" + fmt(ed_base);
    }
    detail = "cached/base: " + summary;
    return true;
  });

  // 7. With a field costly enough to dominate (>= 1 ms per evaluation),
  //    skipping evaluations translates into end-to-end throughput.
  gate.run("throughput scaling with checkpoint interval", 300.0, [threads](std::string& detail) {
    BackboneConfig cfg;
    cfg.blocks = 1;
    cfg.hidden = 16;
    cfg.node_dim = 0;
    cfg.edge_dim = 0;
    cfg.seed = 77;
    EquivariantBackbone<double> field(cfg);
    const auto probe = sample_base<double>(4, 0, 0, 78);

    long rounds = 8192;
    double per_eval = 0.0;
    for (int iter = 0; iter < 8; ++iter) {
      field.set_padding_rounds(static_cast<int>(rounds));
      const double t0 = now_seconds();
      double sink = 0.0;
      for (int i = 0; i < 5; ++i) {
        const auto v = field.evaluate(probe, 0.25);
        sink += v.channels[0].data[0];
      }
      per_eval = (now_seconds() - t0) / 5.0 + (sink == 1e300 ? 1.0 : 0.0);
      if (per_eval >= 1.05e-3) break;
      const double scale = 1.25e-3 / std::max(per_eval, 1e-7);
      rounds = std::min<long>(1000000, std::max<long>(rounds + 1,
                                                      static_cast<long>(rounds * scale)));
    }
    if (per_eval < 1e-3) {
      detail = "could not slow the field to 1 ms per evaluation (got " + fmt(per_eval * 1e3) +
               " ms)";
      return false;
    }

    const auto grid = make_uniform_grid<double>(100);
    const int batch = 200;
    const auto t_none = batch_sample(field, 4, 0, 0, grid, none_policy(), batch, 900, threads);
    const auto t_d2 = batch_sample(field, 4, 0, 0, grid, taylor(2, 1), batch, 900, threads);
    const auto t_d4 = batch_sample(field, 4, 0, 0, grid, taylor(4, 1), batch, 900, threads);
    const double thr_none = batch / t_none.wall_seconds;
    const double r2 = (batch / t_d2.wall_seconds) / thr_none;
    const double r4 = (batch / t_d4.wall_seconds) / thr_none;
    detail = "eval " + fmt(per_eval * 1e3) + " ms, speedups " + fmt(r2) + "x / " + fmt(r4) + "x";
    if (r2 < 1.5) {
      detail += " -- interval 2 below 1.5x";
      return false;
    }
    if (r4 < 2.5) {
      detail += " -- interval 4 below 2.5x";
      return false;
    }
    return true;
  });

  // 8. Peak cache storage matches the policy formula exactly: (m+1)|F| for
  //    Taylor, j|F| for the multistep family, |F| for reuse, nothing for off.
  gate.run("cache memory accounting", 0.0, [](std::string& detail) {
    struct Case {
      int n_nodes, node_dim, edge_dim;
      CachePolicy policy;
      std::size_t factor;
    };
    const Case cases[] = {
        {3, 0, 0, none_policy(), 0}, {3, 0, 0, naive(4), 1},
        {3, 0, 0, taylor(3, 2), 3},  {3, 0, 0, ab(3, 3), 3},
        {4, 2, 1, taylor(2, 1), 2},  {4, 2, 1, ab(2, 2), 2},
    };
    for (const auto& c : cases) {
      MixtureField<double> field(point_mass_spec(c.n_nodes, 808, 1.0));
      const auto x0 = sample_base<double>(c.n_nodes, c.node_dim, c.edge_dim, 809);
      const auto r = integrate(field, x0, make_uniform_grid<double>(20), c.policy);
      const std::size_t per_value = element_count(zero_tangent(x0));
      if (r.record.peak_cache_elements != c.factor * per_value) {
        detail = "policy " + std::string(to_string(c.policy.kind)) + ": peak " +
                 std::to_string(r.record.peak_cache_elements) + ", expected " +
                 std::to_string(c.factor * per_value);
        return false;
      }
    }
    return true;
  });

  // 9. Velocities become easier to extrapolate as integration progresses:
  //    the last quarter of steps beats the first quarter on median linear
  //    predictability, for three independent runs.
  gate.run("late-step velocity predictability", 0.0, [](std::string& detail) {
    MixtureField<double> field(four_mass_spec(8, 606));
    const auto grid = make_uniform_grid<double>(100);
    IntegrationOptions opts;
    opts.record_trajectory = true;
    std::string summary;
    for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
      const auto x0 = sample_base<double>(8, 0, 0, seed);
      const auto r = integrate(field, x0, grid, none_policy(), opts);
      const auto e = linear_predictability_error(flatten_velocities(r.trajectory));
      std::vector<double> first, last;
      for (int k = 2; k < 25; ++k) first.push_back(e[static_cast<std::size_t>(k)]);
      for (int k = 75; k < 100; ++k) last.push_back(e[static_cast<std::size_t>(k)]);
      const double m_first = median(first), m_last = median(last);
      if (!(m_last < m_first)) {
        detail = "seed " + std::to_string(seed) + ": late median " + fmt(m_last) +
                 " not below early median " + fmt(m_first);
        return false;
      }
      if (!summary.empty()) summary += " ";
      summary += fmt(m_last) + "<" + fmt(m_first);
    }
    detail = summary;
    return true;
  });

  // 10. The closed-form mixture velocity agrees with a brute-force
  //     importance-sampled estimate at every probe point.
  gate.run("closed-form velocity versus monte carlo", 180.0, [](std::string& detail) {
    MixtureSpec<double> spec;
    spec.n_nodes = 2;
    Rng setup(1010);
    const double weights[3] = {0.5, 0.3, 0.2};
    const double sigmas[3] = {0.3, 0.0, 0.6};
    for (int j = 0; j < 3; ++j) {
      MixtureComponent<double> c;
      c.weight = weights[j];
      c.sigma = sigmas[j];
      c.mean.resize(6);
      for (auto& m : c.mean) m = 1.5 * setup.normal();
      spec.components.push_back(std::move(c));
    }
    MixtureField<double> field(spec);

    double worst_z = 0.0;
    for (int probe = 0; probe < 20; ++probe) {
      Rng rng(2000 + static_cast<std::uint64_t>(probe));
      const double t = rng.uniform(0.05, 0.9);
      // Probe points drawn from the interpolant itself, so the importance
      // weights stay well conditioned.
      const std::vector<double> x1 = field.sample_target(rng);
      std::vector<double> x(6);
      for (int i = 0; i < 6; ++i) x[static_cast<std::size_t>(i)] =
          (1.0 - t) * rng.normal() + t * x1[static_cast<std::size_t>(i)];

      const std::vector<double> closed = mixture_velocity(spec, x, t);
      std::vector<double> est, se;
      snis_velocity(field, x, t, 1000000, 3000 + static_cast<std::uint64_t>(probe), est, se);
      for (int i = 0; i < 6; ++i) {
        const double diff = std::abs(closed[static_cast<std::size_t>(i)] - est[static_cast<std::size_t>(i)]);
        const double bound = 3.0 * se[static_cast<std::size_t>(i)] + 1e-9;
        if (se[static_cast<std::size_t>(i)] > 0.0)
          worst_z = std::max(worst_z, diff / se[static_cast<std::size_t>(i)]);
        if (diff > bound) {
          detail = "probe " + std::to_string(probe) + " coordinate " + std::to_string(i) +
                   ": |diff| " + fmt(diff) + " > " + fmt(bound);
          return false;
        }
      }
    }
    detail = "worst |z| " + fmt(worst_z);
    return true;
  });

  std::printf("%d of %d checks failed\n", gate.failures, gate.index);
  return gate.failures == 0 ? 0 : 1;
}
