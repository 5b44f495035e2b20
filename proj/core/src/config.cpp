#include "ecodrive/config.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <yaml-cpp/yaml.h>

#include <fstream>
#include <sstream>

#include "ecodrive/errors.hpp"

namespace ecodrive {

TrainConfig AppConfig::train_config() const {
  TrainConfig t = train;
  t.env = env;
  return t;
}

namespace {

YAML::Node parse_value(const std::string& key, const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(key, "cannot parse '" + text + "'");
  }
}

template <typename T>
T convert(const std::string& key, const YAML::Node& node) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(key, "bad value");
  }
}

ControllerKind convert_kind(const std::string& key, const std::string& text) {
  const auto kind = parse_controller_kind(text);
  if (!kind) throw ConfigError(key, "unknown controller '" + text + "'");
  return *kind;
}

std::string kinds_to_string(const std::vector<ControllerKind>& kinds) {
  std::vector<std::string> names;
  for (auto k : kinds) names.emplace_back(to_string(k));
  return fmt::format("[{}]", fmt::join(names, ", "));
}

class Registry {
 public:
  std::vector<ConfigKey> keys;

  void add(std::string name, std::string help, std::function<void(const std::string&)> set,
           std::function<std::string()> get) {
    keys.push_back({std::move(name), std::move(help), std::move(set), std::move(get)});
  }

  template <typename T>
  void num(const std::string& name, T& ref, std::string help = {}) {
    add(
        name, std::move(help),
        [name, &ref](const std::string& s) { ref = convert<T>(name, parse_value(name, s)); },
        [&ref] { return fmt::format("{}", ref); });
  }

  void flag(const std::string& name, bool& ref, std::string help = {}) {
    add(
        name, std::move(help),
        [name, &ref](const std::string& s) { ref = convert<bool>(name, parse_value(name, s)); },
        [&ref] { return std::string(ref ? "true" : "false"); });
  }

  void kind(const std::string& name, ControllerKind& ref, std::string help = {}) {
    add(
        name, std::move(help),
        [name, &ref](const std::string& s) {
          ref = convert_kind(name, convert<std::string>(name, parse_value(name, s)));
        },
        [&ref] { return std::string(to_string(ref)); });
  }

  void text(const std::string& name, std::string& ref, std::string help = {}) {
    add(name, std::move(help), [&ref](const std::string& s) { ref = s; }, [&ref] { return ref; });
  }

  template <typename T>
  void list(const std::string& name, std::vector<T>& ref, std::string help = {}) {
    add(
        name, std::move(help),
        [name, &ref](const std::string& s) {
          const YAML::Node n = parse_value(name, s);
          ref = n.IsSequence() ? convert<std::vector<T>>(name, n)
                               : std::vector<T>{convert<T>(name, n)};
        },
        [&ref] { return fmt::format("[{}]", fmt::join(ref, ", ")); });
  }

  void kinds(const std::string& name, std::vector<ControllerKind>& ref, std::string help = {}) {
    add(
        name, std::move(help),
        [name, &ref](const std::string& s) {
          const YAML::Node n = parse_value(name, s);
          std::vector<std::string> names =
              n.IsSequence() ? convert<std::vector<std::string>>(name, n)
                             : std::vector<std::string>{convert<std::string>(name, n)};
          ref.clear();
          for (const auto& x : names) ref.push_back(convert_kind(name, x));
        },
        [&ref] { return kinds_to_string(ref); });
  }

  void optional_num(const std::string& name, std::optional<double>& ref, std::string help = {}) {
    add(
        name, std::move(help),
        [name, &ref](const std::string& s) {
          const YAML::Node n = parse_value(name, s);
          if (n.IsNull() || s == "none") {
            ref.reset();
          } else {
            ref = convert<double>(name, n);
          }
        },
        [&ref] { return ref ? fmt::format("{}", *ref) : std::string("none"); });
  }
};

void register_energy(Registry& r, EnergyParams& e) {
  r.num("energy.alpha0", e.alpha0, "idle fuel rate, L/s");
  r.num("energy.alpha1", e.alpha1);
  r.num("energy.alpha2", e.alpha2);
  r.num("energy.mass_kg", e.mass_kg);
  r.num("energy.eta", e.eta, "driveline efficiency");
  r.num("energy.rho", e.rho, "air density, kg/m^3");
  r.num("energy.c0", e.c0);
  r.num("energy.c1", e.c1);
  r.num("energy.c2", e.c2);
  r.num("energy.Ca", e.Ca);
  r.num("energy.Cd", e.Cd);
  r.num("energy.Af", e.Af, "frontal area, m^2");
  r.num("energy.grade", e.grade);
}

void register_co2(Registry& r, Co2Coeffs& c) {
  for (std::size_t i = 0; i < c.poly.size(); ++i) r.num(fmt::format("co2.e{}", i), c.poly[i]);
  for (std::size_t i = 0; i < c.surrogate.size(); ++i) {
    r.num(fmt::format("co2.k{}", i), c.surrogate[i]);
  }
}

void register_env(Registry& r, EnvConfig& env) {
  auto& s = env.scenario;
  r.num("scenario.approach_length_m", s.approach_length_m);
  r.num("scenario.outbound_length_m", s.outbound_length_m);
  r.num("scenario.intersection_length_m", s.intersection_length_m);
  r.num("scenario.speed_limit_mps", s.speed_limit_mps);
  r.num("scenario.entry_speed_mps", s.entry_speed_mps);
  r.num("scenario.vehicle_length_m", s.vehicle_length_m);
  r.num("scenario.inflow_veh_per_hr", s.inflow_veh_per_hr);
  r.flag("scenario.inflow_per_approach", s.inflow_per_approach,
         "inflow is per approach (true) or the intersection total (false)");
  r.num("scenario.penetration_pct", s.penetration_pct, "share of CAVs, percent");
  r.kind("scenario.human_model", s.human_model, "V-IDM, N-IDM or M-IDM");
  r.kind("scenario.cav_controller", s.cav_controller, "Policy or EcoGlide");
  r.num("scenario.green_s", s.green_s);
  r.num("scenario.yellow_s", s.yellow_s);
  r.num("scenario.signal_offset_s", s.signal_offset_s);
  r.num("scenario.dt_s", s.dt_s);
  r.num("scenario.horizon_steps", s.horizon_steps);
  r.num("scenario.warmup_steps", s.warmup_steps);
  r.num("scenario.seed", s.seed, "arrival and assignment seed");

  r.num("idm.v0", env.idm.v0);
  r.num("idm.T", env.idm.T);
  r.num("idm.h0", env.idm.h0);
  r.num("idm.c", env.idm.c);
  r.num("idm.b", env.idm.b);
  r.num("idm.delta", env.idm.delta);

  r.num("human.noise_halfwidth", env.human.noise_halfwidth);
  r.num("human.param_rel_std", env.human.param_rel_std);
  r.num("human.param_truncation", env.human.param_truncation);

  r.num("limits.a_min", env.limits.a_min);
  r.num("limits.a_max", env.limits.a_max);
  r.num("limits.h_min", env.limits.h_min);
  r.num("limits.stop_speed", env.limits.stop_speed);

  r.num("comms.r_v2v", env.comms.r_v2v);
  r.num("comms.r_i2v", env.comms.r_i2v);

  auto& w = env.reward;
  r.num("reward.mu1", w.mu1);
  r.num("reward.mu2", w.mu2);
  r.num("reward.mu3", w.mu3);
  r.num("reward.mu4", w.mu4);
  r.num("reward.mu5", w.mu5);
  r.num("reward.mu6", w.mu6);
  r.num("reward.mu7", w.mu7);
  r.num("reward.mu8", w.mu8);
  r.num("reward.mu9", w.mu9);
  r.num("reward.mu10", w.mu10);
  r.num("reward.mu11", w.mu11);
  r.num("reward.delta", w.delta);
  r.num("reward.exp_clamp", w.exp_clamp);

  register_energy(r, env.energy.fuel);
  register_co2(r, env.energy.co2);

  auto& g = env.glide;
  r.num("glide.v_min_glide", g.v_min_glide);
  r.num("glide.comfort_accel", g.comfort_accel);
  r.num("glide.comfort_decel", g.comfort_decel);
  r.num("glide.tracking_time_s", g.tracking_time_s);
  r.num("glide.slot_headway_s", g.slot_headway_s);
  r.num("glide.green_entry_buffer_s", g.green_entry_buffer_s);
  r.num("glide.arrival_speed", g.arrival_speed);

  r.num("env.start_zone_m", env.start_zone_m);
  r.num("env.min_entry_gap_m", env.min_entry_gap_m);
  r.optional_num("env.h_max", env.h_max, "reported only");
}

void register_train(Registry& r, TrainConfig& t) {
  r.num("train.gamma", t.gamma);
  r.num("train.kl_bound", t.kl_bound);
  r.num("train.batch_steps", t.batch_steps);
  r.num("train.iterations", t.iterations);
  r.num("train.seed", t.seed);
  r.num("train.eval_every", t.eval_every);
  r.num("train.eval_replicates", t.eval_replicates);
  r.num("train.cg_iters", t.cg_iters);
  r.num("train.cg_damping", t.cg_damping);
  r.num("train.backtrack_ratio", t.backtrack_ratio);
  r.num("train.max_backtracks", t.max_backtracks);
  r.num("train.fvp_subsample", t.fvp_subsample);
  r.flag("train.normalize_advantages", t.normalize_advantages);
  r.num("train.critic_lr", t.critic_lr);
  r.num("train.critic_epochs", t.critic_epochs);
  r.num("train.critic_minibatch", t.critic_minibatch);
  r.num("train.hidden", t.hidden);
  r.num("train.initial_std", t.initial_std);
}

void register_run(Registry& r, RunSettings& run) {
  r.num("run.replicates", run.replicates);
  r.flag("run.trajectories", run.trajectories, "write the trajectory CSV");
  r.text("run.policy", run.policy_path, "policy checkpoint");
  r.list("sweep.percents", run.sweep_percents);
  r.list("sweep.seeds", run.sweep_seeds);
  r.kinds("sweep.human_models", run.sweep_human_models);
}

std::string scalar_text(const YAML::Node& node) {
  if (node.IsNull()) return {};
  if (node.IsScalar()) return node.Scalar();
  YAML::Emitter out;
  out << YAML::Flow << node;
  return out.c_str();
}

YAML::Node load_yaml(const std::string& text, const std::string& what) {
  try {
    return YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(what, std::string("malformed configuration: ") + e.what());
  }
}

std::string read_file(const std::filesystem::path& path, const std::string& field) {
  std::ifstream in(path);
  if (!in) throw ConfigError(field, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Flattens a (possibly nested) mapping into dotted keys.
void flatten(const YAML::Node& node, const std::string& prefix,
             std::vector<std::pair<std::string, std::string>>& out) {
  for (const auto& kv : node) {
    const std::string key =
        prefix.empty() ? kv.first.as<std::string>() : prefix + "." + kv.first.as<std::string>();
    if (kv.second.IsMap()) {
      flatten(kv.second, key, out);
    } else {
      out.emplace_back(key, scalar_text(kv.second));
    }
  }
}

void apply_section_file(Registry& r, const std::string& section,
                        const std::filesystem::path& path) {
  const YAML::Node root = load_yaml(read_file(path, section + ".file"), section + ".file");
  if (!root.IsMap()) throw ConfigError(section + ".file", "expected a mapping");
  std::vector<std::pair<std::string, std::string>> entries;
  flatten(root, "", entries);
  for (auto& [key, value] : entries) {
    std::string full = key.rfind(section + ".", 0) == 0 ? key : section + "." + key;
    bool found = false;
    for (auto& k : r.keys) {
      if (k.name == full) {
        k.set(value);
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError(full, "unknown key in " + path.string());
  }
}

}  // namespace

std::vector<ConfigKey> config_keys(AppConfig& config) {
  Registry r;
  register_env(r, config.env);
  register_train(r, config.train);
  register_run(r, config.run);
  return std::move(r.keys);
}

void set_config_value(AppConfig& config, const std::string& key, const std::string& value) {
  for (auto& k : config_keys(config)) {
    if (k.name == key) {
      k.set(value);
      return;
    }
  }
  throw ConfigError(key, "unknown configuration key");
}

void load_energy_file(EnergyParams& params, const std::filesystem::path& path) {
  Registry r;
  register_energy(r, params);
  apply_section_file(r, "energy", path);
}

void load_co2_file(Co2Coeffs& coeffs, const std::filesystem::path& path) {
  Registry r;
  register_co2(r, coeffs);
  apply_section_file(r, "co2", path);
}

void apply_config_text(AppConfig& config, const std::string& yaml,
                       const std::filesystem::path& base_dir) {
  const YAML::Node root = load_yaml(yaml, "config");
  if (root.IsNull()) return;
  if (!root.IsMap()) throw ConfigError("config", "expected a mapping at top level");
  std::vector<std::pair<std::string, std::string>> entries;
  flatten(root, "", entries);
  // Coefficient files first so explicit keys can override single values.
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  for (const auto& [key, value] : entries) {
    if (key == "energy.file") load_energy_file(config.env.energy.fuel, resolve(value));
    if (key == "co2.file") load_co2_file(config.env.energy.co2, resolve(value));
  }
  for (const auto& [key, value] : entries) {
    if (key == "energy.file" || key == "co2.file") continue;
    set_config_value(config, key, value);
  }
}

void apply_config_file(AppConfig& config, const std::filesystem::path& path) {
  apply_config_text(config, read_file(path, "config"), path.parent_path());
}

std::string dump_config(const AppConfig& config) {
  AppConfig copy = config;
  std::string out;
  for (const auto& k : config_keys(copy)) out += k.name + ": " + k.get() + "\n";
  return out;
}

std::string config_digest(const EnvConfig& env) {
  AppConfig copy;
  copy.env = env;
  std::string text;
  Registry r;
  register_env(r, copy.env);
  for (const auto& k : r.keys) text += k.name + "=" + k.get() + ";";
  // FNV-1a, 64 bit.
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace ecodrive
