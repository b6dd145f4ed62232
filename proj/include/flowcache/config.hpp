#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowcache/cache.hpp"

namespace flowcache {

// Bad experiment descriptions: parse failures, unknown keys, out-of-range
// values. Messages carry the offending key path. Mapped to its own process
// exit code by the CLI.
class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class FieldKind { Backbone, Mixture, AbsoluteControl };

const char* to_string(FieldKind kind);

// Mixture components described in the config; validated and cast to the lane
// scalar when the field is built.
struct MixtureComponentConfig {
  double weight = 1.0;
  std::vector<double> mean;  // flattened n_nodes x 3
  double sigma = 0.0;
};

// Draw `count` point-mass (or sigma-smeared) components with means sampled
// i.i.d. normal * spread from a dedicated seed.
struct RandomMixtureConfig {
  int count = 0;  // 0 means "not requested"
  std::uint64_t seed = 0;
  double spread = 3.0;
  double sigma = 0.0;
};

// Full experiment description, scalar-type independent. The CLI can override
// seed, threads, precision, and out_dir after parsing.
struct ExperimentConfig {
  FieldKind field_kind = FieldKind::Backbone;

  // backbone / absolute_control parameters
  int blocks = 2;
  int hidden = 16;
  std::uint64_t field_seed = 0;
  int padding_rounds = 0;

  // mixture parameters
  std::vector<MixtureComponentConfig> components;
  RandomMixtureConfig random_mixture;
  double clamp_eps = 1e-4;

  int n_nodes = 8;
  int node_dim = 0;
  int edge_dim = 0;
  std::string topology = "complete";
  int steps = 100;
  std::vector<CachePolicy> policies;
  int batch = 1;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string precision = "double";
  bool record_trajectories = false;
  double divergence_threshold = 1e6;
  int equiv_probes = 0;    // group elements per policy for the equivariance column
  int target_samples = 0;  // exact target draws for the energy-distance column
  std::string out_dir;
};

// Parses and validates a JSON experiment file. Unknown keys are errors; all
// diagnostics name the file and the key path.
ExperimentConfig parse_config(const std::filesystem::path& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& source_name);

// Normalized echo of the config with defaults filled in, pretty-printed JSON.
std::string config_to_json(const ExperimentConfig& cfg);

// Run manifest: version, subcommand, effective config, timing metadata.
std::string manifest_json(const ExperimentConfig& cfg, const std::string& command,
                          const std::string& out_dir, const std::string& started_utc,
                          double wall_seconds);

// Compact one-line JSON record of a recorded trajectory's coordinates.
std::string trajectory_jsonl_record(const std::string& policy_label, std::uint64_t seed,
                                    const std::vector<double>& times,
                                    const std::vector<char>& full_compute,
                                    const std::vector<std::vector<double>>& coords_per_step);

// Filesystem-safe policy tag: "none", "naive_D3", "taylor_D2_m1",
// "ab_D2_j2_offset_aware".
std::string policy_label(const CachePolicy& p);

}  // namespace flowcache
