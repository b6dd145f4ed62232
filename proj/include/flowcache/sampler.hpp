#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "flowcache/backbone.hpp"
#include "flowcache/cache.hpp"
#include "flowcache/core.hpp"
#include "flowcache/rng.hpp"

namespace flowcache {

// Base distribution draw: standard normal coordinates with the center of mass
// removed, plus optional standard normal node/edge channels on the complete
// graph. Channel names are fixed so downstream code can look them up.
template <typename Real>
State<Real> sample_base(int n_nodes, int node_dim, int edge_dim, std::uint64_t seed) {
  if (n_nodes < 1) throw std::invalid_argument("sample_base: n_nodes must be >= 1");
  if (node_dim < 0 || edge_dim < 0)
    throw std::invalid_argument("sample_base: channel dims must be >= 0");
  Rng rng(seed);
  State<Real> s;
  s.n_nodes = n_nodes;
  s.edges = make_complete_edges(n_nodes);

  Channel<Real> coords = make_channel<Real>("coords", ChannelRole::Points,
                                            static_cast<std::size_t>(n_nodes), 3);
  for (auto& v : coords.data) v = static_cast<Real>(rng.normal());
  for (int c = 0; c < 3; ++c) {
    Real mean = Real(0);
    for (int i = 0; i < n_nodes; ++i) mean += coords.at(static_cast<std::size_t>(i), static_cast<std::size_t>(c));
    mean /= static_cast<Real>(n_nodes);
    for (int i = 0; i < n_nodes; ++i) coords.at(static_cast<std::size_t>(i), static_cast<std::size_t>(c)) -= mean;
  }
  s.channels.push_back(std::move(coords));

  if (node_dim > 0) {
    Channel<Real> node = make_channel<Real>("node_attrs", ChannelRole::Node,
                                            static_cast<std::size_t>(n_nodes),
                                            static_cast<std::size_t>(node_dim));
    for (auto& v : node.data) v = static_cast<Real>(rng.normal());
    s.channels.push_back(std::move(node));
  }
  if (edge_dim > 0) {
    Channel<Real> edge = make_channel<Real>("edge_attrs", ChannelRole::Edge, s.edges.size(),
                                            static_cast<std::size_t>(edge_dim));
    for (auto& v : edge.data) v = static_cast<Real>(rng.normal());
    s.channels.push_back(std::move(edge));
  }
  validate(s);
  return s;
}

// Counters for one integration run. wall_seconds covers the Euler loop only.
struct RunRecord {
  CachePolicy policy;
  int steps = 0;
  long nfe = 0;
  long forecasts = 0;
  double wall_seconds = 0.0;
  std::size_t peak_cache_elements = 0;
};

template <typename Real>
struct TrajectoryRecord {
  std::vector<Real> times;              // steps() + 1 grid points
  std::vector<State<Real>> states;      // x_0 .. x_K
  std::vector<Tangent<Real>> velocities;  // applied velocity per step
  std::vector<char> full_compute;       // 1 when the step evaluated the field
};

template <typename Real>
struct IntegrationResult {
  State<Real> final_state;
  RunRecord record;
  TrajectoryRecord<Real> trajectory;  // populated only when requested
};

struct IntegrationOptions {
  bool record_trajectory = false;
  double divergence_threshold = 1e6;
};

// Explicit Euler over the grid with predictive caching of the field value.
// Checkpoint steps evaluate the field and refresh the cache; all other steps
// reuse or extrapolate cached values. The final state is validated against
// the divergence threshold after every step.
template <typename Real>
IntegrationResult<Real> integrate(const VectorField<Real>& field, const State<Real>& initial,
                                  const TimeGrid<Real>& grid, const CachePolicy& policy,
                                  const IntegrationOptions& opts = {}) {
  validate(initial);
  validate(policy);
  const int steps = grid.steps();
  const std::vector<int> checkpoints = schedule(steps, policy);
  std::vector<char> is_checkpoint(static_cast<std::size_t>(steps), 0);
  for (int k : checkpoints) is_checkpoint[static_cast<std::size_t>(k)] = 1;

  IntegrationResult<Real> result;
  result.record.policy = policy;
  result.record.steps = steps;
  State<Real> x = initial;
  CacheState<Real> cache(policy);

  if (opts.record_trajectory) {
    result.trajectory.times.reserve(static_cast<std::size_t>(steps) + 1);
    result.trajectory.states.reserve(static_cast<std::size_t>(steps) + 1);
    result.trajectory.velocities.reserve(static_cast<std::size_t>(steps));
    result.trajectory.full_compute.reserve(static_cast<std::size_t>(steps));
    result.trajectory.times.push_back(grid.time(0));
    result.trajectory.states.push_back(x);
  }

  const auto t_start = std::chrono::steady_clock::now();
  for (int k = 0; k < steps; ++k) {
    const Real t = grid.time(k);
    Tangent<Real> v;
    if (is_checkpoint[static_cast<std::size_t>(k)]) {
      v = field.evaluate(x, t);
      cache.refresh(v, k);
    } else {
      v = cache.forecast(k - cache.latest_step());
    }
    result.record.peak_cache_elements =
        std::max(result.record.peak_cache_elements, cache.memory_footprint());
    axpy_in_place(x, grid.dt(k), v);

    if (!all_finite(x)) throw DivergenceError(k, "state became non-finite");
    if (static_cast<double>(max_abs(x)) > opts.divergence_threshold)
      throw DivergenceError(k, "state magnitude exceeded " +
                                   std::to_string(opts.divergence_threshold));

    if (opts.record_trajectory) {
      result.trajectory.times.push_back(grid.time(k + 1));
      result.trajectory.states.push_back(x);
      result.trajectory.velocities.push_back(std::move(v));
      result.trajectory.full_compute.push_back(is_checkpoint[static_cast<std::size_t>(k)]);
    }
  }
  const auto t_end = std::chrono::steady_clock::now();

  result.record.wall_seconds = std::chrono::duration<double>(t_end - t_start).count();
  result.record.nfe = cache.nfe();
  result.record.forecasts = cache.forecast_count();
  result.final_state = std::move(x);
  return result;
}

template <typename Real>
struct BatchResult {
  std::vector<State<Real>> finals;
  std::vector<RunRecord> records;  // one per trajectory, in index order
  double wall_seconds = 0.0;       // batch wall clock, includes thread overhead

  long total_nfe() const {
    long n = 0;
    for (const auto& r : records) n += r.nfe;
    return n;
  }
  long total_forecasts() const {
    long n = 0;
    for (const auto& r : records) n += r.forecasts;
    return n;
  }
};

// Integrates `count` independent trajectories. Trajectory i starts from
// sample_base(..., base_seed + i), so results are bit-identical for any
// thread count. The first failing trajectory (by index) has its exception
// rethrown with the index prepended.
template <typename Real>
BatchResult<Real> batch_sample(const VectorField<Real>& field, int n_nodes, int node_dim,
                               int edge_dim, const TimeGrid<Real>& grid,
                               const CachePolicy& policy, int count, std::uint64_t base_seed,
                               int threads = 1, const IntegrationOptions& opts = {}) {
  if (count < 1) throw std::invalid_argument("batch_sample: count must be >= 1");
  if (threads < 1) throw std::invalid_argument("batch_sample: threads must be >= 1");
  threads = std::min(threads, count);

  BatchResult<Real> out;
  out.finals.resize(static_cast<std::size_t>(count));
  out.records.resize(static_cast<std::size_t>(count));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));

  auto worker = [&](int w) {
    for (int i = w; i < count; i += threads) {
      try {
        State<Real> x0 = sample_base<Real>(n_nodes, node_dim, edge_dim,
                                           base_seed + static_cast<std::uint64_t>(i));
        IntegrationResult<Real> r = integrate(field, x0, grid, policy, opts);
        out.finals[static_cast<std::size_t>(i)] = std::move(r.final_state);
        out.records[static_cast<std::size_t>(i)] = r.record;
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };

  const auto t_start = std::chrono::steady_clock::now();
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    for (auto& th : pool) th.join();
  }
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  for (int i = 0; i < count; ++i) {
    if (!errors[static_cast<std::size_t>(i)]) continue;
    try {
      std::rethrow_exception(errors[static_cast<std::size_t>(i)]);
    } catch (const DivergenceError& e) {
      throw DivergenceError(e.step(), "trajectory " + std::to_string(i) + ": " + e.what());
    } catch (const std::exception& e) {
      throw std::runtime_error("trajectory " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace flowcache
