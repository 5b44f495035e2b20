#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ecodrive/environment.hpp"
#include "ecodrive/trainer.hpp"

namespace ecodrive {

struct RunSettings {
  int replicates = 1;
  bool trajectories = true;
  std::string policy_path;  // checkpoint for policy CAVs
  std::vector<double> sweep_percents{25.0, 50.0, 75.0, 100.0};
  std::vector<std::uint64_t> sweep_seeds{0, 1, 2, 3, 4};
  std::vector<ControllerKind> sweep_human_models{ControllerKind::kVanillaIdm};
};

// Everything a command needs. `train.env` is ignored; `env` is the single
// source of scenario and environment settings.
struct AppConfig {
  EnvConfig env;
  TrainConfig train;
  RunSettings run;

  TrainConfig train_config() const;
};

// One settable key, "section.name". Values are parsed as YAML scalars or
// flow sequences, so "12", "true", "M-IDM" and "[25, 50]" all work.
struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

// Keys bound to `config`; the returned setters write into it.
std::vector<ConfigKey> config_keys(AppConfig& config);

// Throws ConfigError naming the key on unknown keys or bad values.
void set_config_value(AppConfig& config, const std::string& key, const std::string& value);

// YAML mapping, nested by section ("scenario: {penetration_pct: 50}") or
// flat with dotted keys. `energy.file` / `co2.file` load coefficient files.
void apply_config_text(AppConfig& config, const std::string& yaml,
                       const std::filesystem::path& base_dir = {});
void apply_config_file(AppConfig& config, const std::filesystem::path& path);

// Coefficient files use the same format with keys of the `energy` or `co2`
// section. Missing files raise ConfigError.
void load_energy_file(EnergyParams& params, const std::filesystem::path& path);
void load_co2_file(Co2Coeffs& coeffs, const std::filesystem::path& path);

// Canonical "key: value" listing, one key per line in registry order.
std::string dump_config(const AppConfig& config);
// 16 hex digits identifying every setting that affects a simulation.
std::string config_digest(const EnvConfig& env);

}  // namespace ecodrive
