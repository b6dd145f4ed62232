#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "flowcache/config.hpp"
#include "flowcache/runner.hpp"
#include "flowcache/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitIo = 3;

template <typename Real>
void dispatch(const std::string& command, const flowcache::ExperimentConfig& cfg,
              const std::filesystem::path& out_dir) {
  if (command == "sweep") flowcache::run_sweep<Real>(cfg, out_dir);
  else if (command == "traj") flowcache::run_traj<Real>(cfg, out_dir);
  else flowcache::run_equiv<Real>(cfg, out_dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowcache: cached flow-matching sampler benchmarks"};
  app.set_version_flag("--version", flowcache::kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string precision;
  std::uint64_t seed = 0;
  int threads = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config file (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory (default: config out_dir, else ./out)");
    sub->add_option("--threads", threads, "worker threads for batch integration");
    sub->add_option("--seed", seed, "base seed override");
    sub->add_option("--precision", precision, "scalar type override")
        ->check(CLI::IsMember({"single", "double"}));
  };

  CLI::App* sweep = app.add_subcommand("sweep", "run the policy sweep and write sweep.csv");
  CLI::App* traj = app.add_subcommand("traj", "per-step trajectory diagnostics per policy");
  CLI::App* equiv = app.add_subcommand("equiv", "group-action commutation errors per policy");
  add_common(sweep);
  add_common(traj);
  add_common(equiv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  const std::string command = sweep->parsed() ? "sweep" : traj->parsed() ? "traj" : "equiv";
  const CLI::App* active = sweep->parsed() ? sweep : traj->parsed() ? traj : equiv;

  try {
    flowcache::ExperimentConfig cfg = flowcache::parse_config(config_path);
    if (active->count("--seed")) cfg.seed = seed;
    if (active->count("--threads")) cfg.threads = threads;
    if (active->count("--precision")) cfg.precision = precision;
    if (cfg.threads < 1) throw flowcache::ConfigError("config: threads must be >= 1");

    std::filesystem::path out = !out_dir.empty()   ? std::filesystem::path(out_dir)
                                : !cfg.out_dir.empty() ? std::filesystem::path(cfg.out_dir)
                                                       : std::filesystem::path("out");
    if (cfg.precision == "single") dispatch<float>(command, cfg, out);
    else dispatch<double>(command, cfg, out);
    return kExitOk;
  } catch (const flowcache::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const flowcache::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const flowcache::NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::domain_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
}
