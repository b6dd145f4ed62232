#include "flowcache/config.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "flowcache/io.hpp"
#include "flowcache/version.hpp"

namespace flowcache {

using nlohmann::json;

const char* to_string(FieldKind kind) {
  switch (kind) {
    case FieldKind::Backbone: return "backbone";
    case FieldKind::Mixture: return "mixture";
    case FieldKind::AbsoluteControl: return "absolute_control";
  }
  return "?";
}

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError("config: " + path + ": " + msg);
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key)) fail(path.empty() ? key : path + "." + key, "unknown key");
  }
}

const json* find(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

long long get_int(const json& obj, const std::string& path, const std::string& key,
                  long long fallback, long long lo, long long hi) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_number_integer()) fail(join(path, key), "expected an integer");
  const long long x = v->get<long long>();
  if (x < lo || x > hi)
    fail(join(path, key), "value " + std::to_string(x) + " outside [" + std::to_string(lo) +
                              ", " + std::to_string(hi) + "]");
  return x;
}

std::uint64_t get_seed(const json& obj, const std::string& path, const std::string& key,
                       std::uint64_t fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() &&
                                  v->get<long long>() < 0))
    fail(join(path, key), "expected a non-negative integer");
  return v->get<std::uint64_t>();
}

double get_double(const json& obj, const std::string& path, const std::string& key,
                  double fallback, double lo, double hi) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_number()) fail(join(path, key), "expected a number");
  const double x = v->get<double>();
  if (!std::isfinite(x) || x < lo || x > hi) fail(join(path, key), "value out of range");
  return x;
}

bool get_bool(const json& obj, const std::string& path, const std::string& key, bool fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_boolean()) fail(join(path, key), "expected true or false");
  return v->get<bool>();
}

std::string get_string(const json& obj, const std::string& path, const std::string& key,
                       const std::string& fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_string()) fail(join(path, key), "expected a string");
  return v->get<std::string>();
}

CachePolicy parse_policy(const json& obj, const std::string& path) {
  if (!obj.is_object()) fail(path, "expected an object");
  const std::string kind = get_string(obj, path, "kind", "");
  CachePolicy p;
  if (kind == "none") {
    check_keys(obj, path, {"kind"});
    p.kind = CacheKind::None;
  } else if (kind == "naive") {
    check_keys(obj, path, {"kind", "interval"});
    p.kind = CacheKind::Naive;
    p.interval = static_cast<int>(get_int(obj, path, "interval", 2, 1, 1 << 20));
  } else if (kind == "taylor") {
    check_keys(obj, path, {"kind", "interval", "order"});
    p.kind = CacheKind::Taylor;
    p.interval = static_cast<int>(get_int(obj, path, "interval", 2, 1, 1 << 20));
    p.order = static_cast<int>(get_int(obj, path, "order", 1, 0, 64));
  } else if (kind == "ab" || kind == "adams_bashforth") {
    check_keys(obj, path, {"kind", "interval", "order", "mode"});
    p.kind = CacheKind::AdamsBashforth;
    p.interval = static_cast<int>(get_int(obj, path, "interval", 2, 1, 1 << 20));
    p.order = static_cast<int>(get_int(obj, path, "order", 2, 1, 64));
    const std::string mode = get_string(obj, path, "mode", "offset_aware");
    if (mode == "paper_exact") p.ab_mode = ABMode::PaperExact;
    else if (mode == "offset_aware") p.ab_mode = ABMode::OffsetAware;
    else fail(join(path, "mode"), "expected 'paper_exact' or 'offset_aware'");
  } else {
    fail(join(path, "kind"), "expected 'none', 'naive', 'taylor', or 'ab', got '" + kind + "'");
  }
  try {
    validate(p);
  } catch (const std::exception& e) {
    fail(path, e.what());
  }
  return p;
}

void parse_field(const json& obj, ExperimentConfig& cfg) {
  if (!obj.is_object()) fail("field", "expected an object");
  const std::string kind = get_string(obj, "field", "kind", "");
  if (kind == "backbone") {
    cfg.field_kind = FieldKind::Backbone;
    check_keys(obj, "field", {"kind", "blocks", "hidden", "seed", "padding_rounds"});
    cfg.blocks = static_cast<int>(get_int(obj, "field", "blocks", 2, 1, 64));
    cfg.hidden = static_cast<int>(get_int(obj, "field", "hidden", 16, 1, 4096));
    cfg.field_seed = get_seed(obj, "field", "seed", 0);
    cfg.padding_rounds = static_cast<int>(get_int(obj, "field", "padding_rounds", 0, 0, 1 << 20));
  } else if (kind == "absolute_control") {
    cfg.field_kind = FieldKind::AbsoluteControl;
    check_keys(obj, "field", {"kind", "hidden", "seed"});
    cfg.hidden = static_cast<int>(get_int(obj, "field", "hidden", 8, 1, 4096));
    cfg.field_seed = get_seed(obj, "field", "seed", 0);
  } else if (kind == "mixture") {
    cfg.field_kind = FieldKind::Mixture;
    check_keys(obj, "field", {"kind", "components", "random_components", "clamp_eps"});
    cfg.clamp_eps = get_double(obj, "field", "clamp_eps", 1e-4,
                               std::numeric_limits<double>::min(), 0.5);
    const json* comps = find(obj, "components");
    const json* randc = find(obj, "random_components");
    if ((comps != nullptr) == (randc != nullptr))
      fail("field", "mixture needs exactly one of 'components' or 'random_components'");
    if (comps) {
      if (!comps->is_array() || comps->empty())
        fail("field.components", "expected a non-empty array");
      for (std::size_t i = 0; i < comps->size(); ++i) {
        const json& c = (*comps)[i];
        const std::string path = "field.components[" + std::to_string(i) + "]";
        if (!c.is_object()) fail(path, "expected an object");
        check_keys(c, path, {"weight", "mean", "sigma"});
        MixtureComponentConfig mc;
        mc.weight = get_double(c, path, "weight", 1.0, 1e-12, 1.0);
        mc.sigma = get_double(c, path, "sigma", 0.0, 0.0, 1e6);
        const json* mean = find(c, "mean");
        if (!mean || !mean->is_array()) fail(join(path, "mean"), "expected an array of numbers");
        for (const auto& x : *mean) {
          if (!x.is_number()) fail(join(path, "mean"), "expected an array of numbers");
          mc.mean.push_back(x.get<double>());
        }
        cfg.components.push_back(std::move(mc));
      }
    } else {
      const std::string path = "field.random_components";
      if (!randc->is_object()) fail(path, "expected an object");
      check_keys(*randc, path, {"count", "seed", "spread", "sigma"});
      cfg.random_mixture.count = static_cast<int>(get_int(*randc, path, "count", 1, 1, 1 << 16));
      cfg.random_mixture.seed = get_seed(*randc, path, "seed", 0);
      cfg.random_mixture.spread = get_double(*randc, path, "spread", 3.0, 0.0, 1e9);
      cfg.random_mixture.sigma = get_double(*randc, path, "sigma", 0.0, 0.0, 1e6);
    }
  } else {
    fail("field.kind", "expected 'backbone', 'mixture', or 'absolute_control', got '" + kind + "'");
  }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& source_name) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + source_name + ": " + e.what());
  }
  if (!root.is_object()) throw ConfigError("config: " + source_name + ": top level must be an object");

  check_keys(root, "",
             {"field", "n_nodes", "node_dim", "edge_dim", "topology", "steps", "policies",
              "batch", "seed", "threads", "precision", "record_trajectories",
              "divergence_threshold", "equiv_probes", "target_samples", "out_dir"});

  ExperimentConfig cfg;
  const json* field = find(root, "field");
  if (!field) fail("field", "missing (required)");
  parse_field(*field, cfg);

  cfg.n_nodes = static_cast<int>(get_int(root, "", "n_nodes", 8, 1, 1 << 16));
  cfg.node_dim = static_cast<int>(get_int(root, "", "node_dim", 0, 0, 4096));
  cfg.edge_dim = static_cast<int>(get_int(root, "", "edge_dim", 0, 0, 4096));
  cfg.topology = get_string(root, "", "topology", "complete");
  if (cfg.topology != "complete") fail("topology", "only 'complete' is supported");
  cfg.steps = static_cast<int>(get_int(root, "", "steps", 100, 1, 1 << 24));
  cfg.batch = static_cast<int>(get_int(root, "", "batch", 1, 1, 1 << 24));
  cfg.seed = get_seed(root, "", "seed", 0);
  cfg.threads = static_cast<int>(get_int(root, "", "threads", 1, 1, 4096));
  cfg.precision = get_string(root, "", "precision", "double");
  if (cfg.precision != "single" && cfg.precision != "double")
    fail("precision", "expected 'single' or 'double'");
  cfg.record_trajectories = get_bool(root, "", "record_trajectories", false);
  cfg.divergence_threshold =
      get_double(root, "", "divergence_threshold", 1e6, 1e-6, std::numeric_limits<double>::max());
  cfg.equiv_probes = static_cast<int>(get_int(root, "", "equiv_probes", 0, 0, 1 << 16));
  cfg.target_samples = static_cast<int>(get_int(root, "", "target_samples", 0, 0, 1 << 24));
  cfg.out_dir = get_string(root, "", "out_dir", "");

  const json* policies = find(root, "policies");
  if (policies) {
    if (!policies->is_array() || policies->empty())
      fail("policies", "expected a non-empty array");
    for (std::size_t i = 0; i < policies->size(); ++i)
      cfg.policies.push_back(
          parse_policy((*policies)[i], "policies[" + std::to_string(i) + "]"));
  } else {
    cfg.policies.push_back(CachePolicy{});
  }

  if (cfg.field_kind == FieldKind::Mixture) {
    const std::size_t dim = static_cast<std::size_t>(cfg.n_nodes) * 3;
    double total = 0.0;
    for (std::size_t i = 0; i < cfg.components.size(); ++i) {
      if (cfg.components[i].mean.size() != dim)
        fail("field.components[" + std::to_string(i) + "].mean",
             "has " + std::to_string(cfg.components[i].mean.size()) + " entries, expected " +
                 std::to_string(dim) + " (n_nodes * 3)");
      total += cfg.components[i].weight;
    }
    if (!cfg.components.empty() && std::abs(total - 1.0) > 1e-9)
      fail("field.components", "weights sum to " + std::to_string(total) + ", expected 1");
  }
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  return parse_config_text(read_text_file(path), path.string());
}

namespace {

json policy_to_json(const CachePolicy& p) {
  json j;
  j["kind"] = to_string(p.kind);
  if (p.kind != CacheKind::None) j["interval"] = p.interval;
  if (p.kind == CacheKind::Taylor || p.kind == CacheKind::AdamsBashforth) j["order"] = p.order;
  if (p.kind == CacheKind::AdamsBashforth) j["mode"] = to_string(p.ab_mode);
  return j;
}

json config_to_json_value(const ExperimentConfig& cfg) {
  json field;
  field["kind"] = to_string(cfg.field_kind);
  switch (cfg.field_kind) {
    case FieldKind::Backbone:
      field["blocks"] = cfg.blocks;
      field["hidden"] = cfg.hidden;
      field["seed"] = cfg.field_seed;
      field["padding_rounds"] = cfg.padding_rounds;
      break;
    case FieldKind::AbsoluteControl:
      field["hidden"] = cfg.hidden;
      field["seed"] = cfg.field_seed;
      break;
    case FieldKind::Mixture:
      field["clamp_eps"] = cfg.clamp_eps;
      if (cfg.random_mixture.count > 0) {
        field["random_components"] = {{"count", cfg.random_mixture.count},
                                      {"seed", cfg.random_mixture.seed},
                                      {"spread", cfg.random_mixture.spread},
                                      {"sigma", cfg.random_mixture.sigma}};
      } else {
        json comps = json::array();
        for (const auto& c : cfg.components)
          comps.push_back({{"weight", c.weight}, {"mean", c.mean}, {"sigma", c.sigma}});
        field["components"] = std::move(comps);
      }
      break;
  }
  json j;
  j["field"] = std::move(field);
  j["n_nodes"] = cfg.n_nodes;
  j["node_dim"] = cfg.node_dim;
  j["edge_dim"] = cfg.edge_dim;
  j["topology"] = cfg.topology;
  j["steps"] = cfg.steps;
  json pols = json::array();
  for (const auto& p : cfg.policies) pols.push_back(policy_to_json(p));
  j["policies"] = std::move(pols);
  j["batch"] = cfg.batch;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["precision"] = cfg.precision;
  j["record_trajectories"] = cfg.record_trajectories;
  j["divergence_threshold"] = cfg.divergence_threshold;
  j["equiv_probes"] = cfg.equiv_probes;
  j["target_samples"] = cfg.target_samples;
  if (!cfg.out_dir.empty()) j["out_dir"] = cfg.out_dir;
  return j;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) {
  return config_to_json_value(cfg).dump(2);
}

std::string manifest_json(const ExperimentConfig& cfg, const std::string& command,
                          const std::string& out_dir, const std::string& started_utc,
                          double wall_seconds) {
  json j;
  j["version"] = kVersion;
  j["command"] = command;
  j["started_utc"] = started_utc;
  j["wall_seconds"] = wall_seconds;
  j["out_dir"] = out_dir;
  j["config"] = config_to_json_value(cfg);
  return j.dump(2);
}

std::string trajectory_jsonl_record(const std::string& policy_label, std::uint64_t seed,
                                    const std::vector<double>& times,
                                    const std::vector<char>& full_compute,
                                    const std::vector<std::vector<double>>& coords_per_step) {
  json j;
  j["policy"] = policy_label;
  j["seed"] = seed;
  j["times"] = times;
  json fc = json::array();
  for (char c : full_compute) fc.push_back(c != 0);
  j["full_compute"] = std::move(fc);
  j["coords"] = coords_per_step;
  return j.dump();
}

std::string policy_label(const CachePolicy& p) {
  std::ostringstream ss;
  switch (p.kind) {
    case CacheKind::None: return "none";
    case CacheKind::Naive: ss << "naive_D" << p.interval; break;
    case CacheKind::Taylor: ss << "taylor_D" << p.interval << "_m" << p.order; break;
    case CacheKind::AdamsBashforth:
      ss << "ab_D" << p.interval << "_j" << p.order << "_" << to_string(p.ab_mode);
      break;
  }
  return ss.str();
}

}  // namespace flowcache
