#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flowcache/backbone.hpp"
#include "flowcache/config.hpp"
#include "flowcache/core.hpp"
#include "flowcache/io.hpp"
#include "flowcache/metrics.hpp"
#include "flowcache/mixture.hpp"
#include "flowcache/sampler.hpp"

namespace flowcache {

namespace detail {
// Seed salts keep the independent random streams (trajectories, target draws,
// group probes) from colliding when users pick small consecutive seeds.
inline constexpr std::uint64_t kTargetSalt = 0x7a17e7d5a3b1c901ull;
inline constexpr std::uint64_t kProbeSalt = 0x3c6ef372fe94f82bull;
}  // namespace detail

template <typename Real>
MixtureSpec<Real> build_mixture_spec(const ExperimentConfig& cfg) {
  MixtureSpec<Real> spec;
  spec.n_nodes = cfg.n_nodes;
  if (cfg.random_mixture.count > 0) {
    Rng rng(cfg.random_mixture.seed);
    const int count = cfg.random_mixture.count;
    for (int c = 0; c < count; ++c) {
      MixtureComponent<Real> mc;
      mc.weight = Real(1) / static_cast<Real>(count);
      mc.sigma = static_cast<Real>(cfg.random_mixture.sigma);
      mc.mean.resize(static_cast<std::size_t>(cfg.n_nodes) * 3);
      for (auto& m : mc.mean)
        m = static_cast<Real>(cfg.random_mixture.spread * rng.normal());
      spec.components.push_back(std::move(mc));
    }
  } else {
    for (const auto& c : cfg.components) {
      MixtureComponent<Real> mc;
      mc.weight = static_cast<Real>(c.weight);
      mc.sigma = static_cast<Real>(c.sigma);
      mc.mean.assign(c.mean.begin(), c.mean.end());
      spec.components.push_back(std::move(mc));
    }
  }
  return spec;
}

template <typename Real>
struct FieldBundle {
  std::unique_ptr<VectorField<Real>> field;
  const MixtureField<Real>* mixture = nullptr;  // set when the field is a mixture
};

template <typename Real>
FieldBundle<Real> make_field(const ExperimentConfig& cfg) {
  FieldBundle<Real> out;
  switch (cfg.field_kind) {
    case FieldKind::Backbone: {
      BackboneConfig bc;
      bc.blocks = cfg.blocks;
      bc.hidden = cfg.hidden;
      bc.node_dim = cfg.node_dim;
      bc.edge_dim = cfg.edge_dim;
      bc.seed = cfg.field_seed;
      bc.padding_rounds = cfg.padding_rounds;
      out.field = std::make_unique<EquivariantBackbone<Real>>(bc);
      break;
    }
    case FieldKind::AbsoluteControl:
      out.field = std::make_unique<AbsolutePositionField<Real>>(cfg.field_seed, cfg.hidden);
      break;
    case FieldKind::Mixture: {
      auto mf = std::make_unique<MixtureField<Real>>(build_mixture_spec<Real>(cfg),
                                                     static_cast<Real>(cfg.clamp_eps));
      out.mixture = mf.get();
      out.field = std::move(mf);
      break;
    }
  }
  return out;
}

namespace detail {

inline std::vector<double> center_coords(std::vector<double> x) {
  const std::size_t n = x.size() / 3;
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x[i * 3 + c];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) x[i * 3 + c] -= mean;
  }
  return x;
}

inline std::string order_cell(const CachePolicy& p) {
  return (p.kind == CacheKind::Taylor || p.kind == CacheKind::AdamsBashforth)
             ? std::to_string(p.order)
             : std::string{};
}

inline std::string ab_mode_cell(const CachePolicy& p) {
  return p.kind == CacheKind::AdamsBashforth ? std::string(to_string(p.ab_mode)) : std::string{};
}

}  // namespace detail

inline const std::vector<std::string>& sweep_csv_header() {
  static const std::vector<std::string> header = {
      "policy_kind",    "D",   "order", "ab_mode", "K", "nfe", "forecasts", "wall_seconds",
      "throughput_samples_per_s", "peak_cache_elements", "energy_distance",
      "mean_equivariance_error"};
  return header;
}

// One CSV row per policy: schedule counters, timing, and (when computable)
// distributional quality and equivariance columns. Empty cells mean "not
// requested for this run", never silent zeros.
template <typename Real>
void run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  ensure_output_dir(out_dir);
  const std::string started = utc_timestamp();
  const auto t0 = std::chrono::steady_clock::now();

  FieldBundle<Real> fb = make_field<Real>(cfg);
  const TimeGrid<Real> grid = make_uniform_grid<Real>(cfg.steps);
  IntegrationOptions opts;
  opts.divergence_threshold = cfg.divergence_threshold;

  std::vector<std::vector<double>> target;
  if (fb.mixture && cfg.target_samples > 0) {
    Rng rng(cfg.seed ^ detail::kTargetSalt);
    target.reserve(static_cast<std::size_t>(cfg.target_samples));
    for (int i = 0; i < cfg.target_samples; ++i) {
      const std::vector<Real> draw = fb.mixture->sample_target(rng);
      target.push_back(detail::center_coords(std::vector<double>(draw.begin(), draw.end())));
    }
  }

  std::vector<GroupElement> probes;
  if (cfg.equiv_probes > 0) {
    Rng rng(cfg.seed ^ detail::kProbeSalt);
    for (int i = 0; i < cfg.equiv_probes; ++i)
      probes.push_back(random_group_element(rng, cfg.n_nodes));
  }

  CsvWriter csv(out_dir / "sweep.csv", sweep_csv_header());
  std::optional<JsonlWriter> jsonl;
  if (cfg.record_trajectories) jsonl.emplace(out_dir / "trajectories.jsonl");

  for (const CachePolicy& policy : cfg.policies) {
    const BatchResult<Real> batch =
        batch_sample(*fb.field, cfg.n_nodes, cfg.node_dim, cfg.edge_dim, grid, policy,
                     cfg.batch, cfg.seed, cfg.threads, opts);
    const RunRecord& rec = batch.records.front();
    const double throughput =
        batch.wall_seconds > 0 ? static_cast<double>(cfg.batch) / batch.wall_seconds : 0.0;

    std::string ed_cell;
    if (!target.empty()) {
      std::vector<std::vector<double>> samples;
      samples.reserve(batch.finals.size());
      for (const auto& s : batch.finals) samples.push_back(centered_points(s));
      ed_cell = fmt_double(energy_distance(samples, target));
    }

    std::string eq_cell;
    if (!probes.empty()) {
      const State<Real> x0 =
          sample_base<Real>(cfg.n_nodes, cfg.node_dim, cfg.edge_dim, cfg.seed);
      double acc = 0.0;
      for (const GroupElement& g : probes)
        acc += equivariance_error(*fb.field, policy, grid, g, x0);
      eq_cell = fmt_double(acc / static_cast<double>(probes.size()));
    }

    csv.write_row({to_string(policy.kind), std::to_string(policy.interval),
                   detail::order_cell(policy), detail::ab_mode_cell(policy),
                   std::to_string(cfg.steps), std::to_string(rec.nfe),
                   std::to_string(rec.forecasts), fmt_double(batch.wall_seconds),
                   fmt_double(throughput), std::to_string(rec.peak_cache_elements), ed_cell,
                   eq_cell});

    if (jsonl) {
      IntegrationOptions traj_opts = opts;
      traj_opts.record_trajectory = true;
      const State<Real> x0 =
          sample_base<Real>(cfg.n_nodes, cfg.node_dim, cfg.edge_dim, cfg.seed);
      const IntegrationResult<Real> r = integrate(*fb.field, x0, grid, policy, traj_opts);
      std::vector<double> times(r.trajectory.times.begin(), r.trajectory.times.end());
      std::vector<std::vector<double>> coords;
      coords.reserve(r.trajectory.states.size());
      for (const auto& s : r.trajectory.states) coords.push_back(flatten_points(s));
      jsonl->write_record(trajectory_jsonl_record(policy_label(policy), cfg.seed, times,
                                                  r.trajectory.full_compute, coords));
    }
  }
  csv.flush();
  if (jsonl) jsonl->flush();

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text_file(out_dir / "manifest.json",
                  manifest_json(cfg, "sweep", out_dir.string(), started, wall));
}

inline const std::vector<std::string>& traj_csv_header() {
  static const std::vector<std::string> header = {
      "step", "t", "is_full_compute", "predictability_error", "deviation_vs_base",
      "pca_x", "pca_y"};
  return header;
}

// Per-step diagnostics for one trajectory per policy, all runs sharing the
// same initial state. Row k describes solver step k: the state it starts
// from, whether the field was fully evaluated, the linear predictability of
// the applied velocity, and the drift against the uncached baseline.
template <typename Real>
void run_traj(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  if (!cfg.record_trajectories)
    throw ConfigError("config: traj requires record_trajectories = true");
  if (cfg.steps < 3)
    throw ConfigError("config: traj requires steps >= 3 for the predictability series");
  ensure_output_dir(out_dir);
  const std::string started = utc_timestamp();
  const auto t0 = std::chrono::steady_clock::now();

  FieldBundle<Real> fb = make_field<Real>(cfg);
  const TimeGrid<Real> grid = make_uniform_grid<Real>(cfg.steps);
  IntegrationOptions opts;
  opts.record_trajectory = true;
  opts.divergence_threshold = cfg.divergence_threshold;

  const State<Real> x0 = sample_base<Real>(cfg.n_nodes, cfg.node_dim, cfg.edge_dim, cfg.seed);
  const IntegrationResult<Real> base = integrate(*fb.field, x0, grid, CachePolicy{}, opts);

  for (const CachePolicy& policy : cfg.policies) {
    const IntegrationResult<Real> run =
        policy.kind == CacheKind::None ? base : integrate(*fb.field, x0, grid, policy, opts);
    const std::vector<double> deviation = trajectory_deviation(base.trajectory, run.trajectory);
    const std::vector<double> pred =
        linear_predictability_error(flatten_velocities(run.trajectory));
    std::vector<std::vector<double>> rows;
    rows.reserve(run.trajectory.states.size());
    for (const auto& s : run.trajectory.states) rows.push_back(flatten(s));
    const PcaProjection pca = pca_project(rows);

    CsvWriter csv(out_dir / ("traj_" + policy_label(policy) + ".csv"), traj_csv_header());
    for (int k = 0; k < cfg.steps; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      csv.write_row({std::to_string(k), fmt_double(static_cast<double>(grid.time(k))),
                     run.trajectory.full_compute[ks] ? "1" : "0", fmt_double(pred[ks]),
                     fmt_double(deviation[ks]), fmt_double(pca.coords[ks][0]),
                     fmt_double(pca.coords[ks][1])});
    }
    csv.flush();
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text_file(out_dir / "manifest.json",
                  manifest_json(cfg, "traj", out_dir.string(), started, wall));
}

inline const std::vector<std::string>& equiv_csv_header() {
  static const std::vector<std::string> header = {"policy_kind", "D",     "order",
                                                  "ab_mode",     "probe", "equivariance_error"};
  return header;
}

// End-to-end commutation check: integrate-then-transform vs
// transform-then-integrate for shared random group elements, per policy.
template <typename Real>
void run_equiv(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.equiv_probes < 1)
    throw ConfigError("config: equiv requires equiv_probes >= 1");
  ensure_output_dir(out_dir);
  const std::string started = utc_timestamp();
  const auto t0 = std::chrono::steady_clock::now();

  FieldBundle<Real> fb = make_field<Real>(cfg);
  const TimeGrid<Real> grid = make_uniform_grid<Real>(cfg.steps);
  const State<Real> x0 = sample_base<Real>(cfg.n_nodes, cfg.node_dim, cfg.edge_dim, cfg.seed);

  std::vector<GroupElement> probes;
  Rng rng(cfg.seed ^ detail::kProbeSalt);
  for (int i = 0; i < cfg.equiv_probes; ++i)
    probes.push_back(random_group_element(rng, cfg.n_nodes));

  CsvWriter csv(out_dir / "equiv.csv", equiv_csv_header());
  for (const CachePolicy& policy : cfg.policies) {
    for (std::size_t i = 0; i < probes.size(); ++i) {
      const double err = equivariance_error(*fb.field, policy, grid, probes[i], x0);
      csv.write_row({to_string(policy.kind), std::to_string(policy.interval),
                     detail::order_cell(policy), detail::ab_mode_cell(policy),
                     std::to_string(i), fmt_double(err)});
    }
  }
  csv.flush();

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text_file(out_dir / "manifest.json",
                  manifest_json(cfg, "equiv", out_dir.string(), started, wall));
}

}  // namespace flowcache
