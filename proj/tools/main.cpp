// ecodrive command-line tool: run, train, sweep, baseline.
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ecodrive/config.hpp"
#include "ecodrive/errors.hpp"
#include "ecodrive/harness.hpp"
#include "ecodrive/trainer.hpp"

namespace fs = std::filesystem;
using namespace ecodrive;

namespace {

// Flags every subcommand shares. Config-key flags are kept as raw strings
// and applied after the --config file so the command line wins.
struct CommonArgs {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::map<std::string, std::string> overrides;
  std::string energy_file;
  std::string co2_file;
};

void add_common(CLI::App* cmd, CommonArgs& args, const std::vector<ConfigKey>& keys) {
  cmd->add_option("--config", args.config_file, "YAML config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "seed");
  cmd->add_option("--out-dir", args.out_dir, "output directory")->capture_default_str();
  cmd->add_option("--energy.file", args.energy_file, "fuel-model coefficient file");
  cmd->add_option("--co2.file", args.co2_file, "CO2 coefficient file");
  for (const auto& k : keys) {
    cmd->add_option_function<std::string>(
           "--" + k.name,
           [&args, name = k.name](const std::string& v) { args.overrides[name] = v; },
           k.help.empty() ? "default: " + k.get() : k.help + " (default: " + k.get() + ")")
        ->group("Config keys");
  }
}

AppConfig resolve(const CommonArgs& args) {
  AppConfig app;
  if (!args.config_file.empty()) apply_config_file(app, args.config_file);
  if (!args.energy_file.empty()) load_energy_file(app.env.energy.fuel, args.energy_file);
  if (!args.co2_file.empty()) load_co2_file(app.env.energy.co2, args.co2_file);
  for (const auto& [key, value] : args.overrides) set_config_value(app, key, value);
  return app;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

fs::path prepare_out_dir(const CommonArgs& args, const AppConfig& app) {
  const fs::path dir = args.out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / "config.yaml", dump_config(app));
  return dir;
}

int cmd_run(const CommonArgs& args) {
  AppConfig app = resolve(args);
  app.env.record_trajectories = app.run.trajectories;
  validate(app.env);
  const std::uint64_t seed = args.seed.value_or(app.env.scenario.seed);
  std::optional<PolicyParams> policy;
  EpisodeOptions opt;
  if (!app.run.policy_path.empty()) {
    policy = load_policy(app.run.policy_path);
    opt.policy = &*policy;
  }
  const fs::path dir = prepare_out_dir(args, app);
  const RunResult r =
      run_scenario(std::make_shared<EnvConfig>(app.env), seed, app.run.replicates, opt);
  const std::string json = metrics_json(r.report);
  write_file(dir / "metrics.json", json);
  if (app.run.trajectories) export_trajectories(r.trajectory, dir / "trajectories.csv");
  std::cout << json << '\n';
  if (r.report.no_vehicles_warning) {
    std::cerr << R"({"warning":"no_vehicles","message":"no vehicle completed a measured trip"})"
              << '\n';
  }
  return 0;
}

int cmd_train(const CommonArgs& args) {
  AppConfig app = resolve(args);
  if (args.seed) app.train.seed = *args.seed;
  TrainConfig tc = app.train_config();
  validate(tc);
  const fs::path dir = prepare_out_dir(args, app);
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult res = train(tc, [&](const LearningRecord& r) {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    fmt::print(
        "iter {:4d}  {:7.1f}s  return {:.4g}  fuel {:.4f} L  speed {:.2f} m/s  kl {:.4f}{}\n",
        r.iteration, secs, r.mean_return, r.mean_fuel_l, r.mean_speed_mps, r.kl,
        r.accepted ? "" : "  (rejected)");
    std::fflush(stdout);
  });
  save_policy(res.policy, dir / "policy.txt");
  write_file(dir / "learning_curve.csv", learning_curve_csv(res.curve));
  fmt::print("wrote {}\n", (dir / "policy.txt").string());
  return 0;
}

int cmd_sweep(const CommonArgs& args) {
  AppConfig app = resolve(args);
  if (app.run.policy_path.empty()) throw ConfigError("run.policy", "sweep needs a checkpoint");
  validate(app.env);
  std::vector<std::uint64_t> seeds = app.run.sweep_seeds;
  if (args.seed) seeds = {*args.seed};
  const PolicyParams policy = load_policy(app.run.policy_path);
  const fs::path dir = prepare_out_dir(args, app);
  SweepResult all;
  for (ControllerKind human : app.run.sweep_human_models) {
    SweepResult r = penetration_sweep(policy, app.env, human, app.run.sweep_percents, seeds,
                                      app.run.replicates);
    all.cells.insert(all.cells.end(), r.cells.begin(), r.cells.end());
  }
  const std::string csv = sweep_csv(all);
  write_file(dir / "sweep.csv", csv);
  std::cout << csv;
  return 0;
}

int cmd_baseline(const CommonArgs& args) {
  AppConfig app = resolve(args);
  validate(app.env);
  const std::uint64_t seed = args.seed.value_or(app.env.scenario.seed);
  const fs::path dir = prepare_out_dir(args, app);

  struct Row {
    std::string name;
    EnvConfig env;
  };
  std::vector<Row> rows;
  for (ControllerKind human :
       {ControllerKind::kVanillaIdm, ControllerKind::kNoisyIdm, ControllerKind::kMixedIdm}) {
    EnvConfig e = app.env;
    e.scenario.human_model = human;
    e.scenario.penetration_pct = 0.0;
    rows.push_back({std::string(to_string(human)), e});
  }
  EnvConfig glide = app.env;
  glide.scenario.human_model = ControllerKind::kVanillaIdm;
  glide.scenario.cav_controller = ControllerKind::kEcoGlide;
  glide.scenario.penetration_pct = 100.0;
  rows.push_back({"EcoGlide", glide});

  std::optional<PolicyParams> policy;
  EpisodeOptions opt;
  if (!app.run.policy_path.empty()) {
    policy = load_policy(app.run.policy_path);
    opt.policy = &*policy;
    EnvConfig p = glide;
    p.scenario.cav_controller = ControllerKind::kPolicy;
    rows.push_back({"Policy", p});
  }

  std::string csv =
      "controller,vehicles,fuel_l,co2_kg,speed_mps,stops_per_vehicle,throughput_per_green,"
      "fuel_improvement_pct,speed_improvement_pct\n";
  double ref_fuel = 0.0, ref_speed = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const MetricsReport m =
        run_scenario(std::make_shared<EnvConfig>(rows[i].env), seed, app.run.replicates, opt)
            .report;
    if (i == 0) {
      ref_fuel = m.fuel_l;
      ref_speed = m.speed_mps;
    }
    csv += fmt::format("{},{},{},{},{},{},{},{},{}\n", rows[i].name, m.vehicles, m.fuel_l, m.co2_kg,
                       m.speed_mps, m.stops_per_vehicle, m.throughput,
                       fuel_improvement(ref_fuel, m.fuel_l),
                       speed_improvement(ref_speed, m.speed_mps));
  }
  write_file(dir / "baseline.csv", csv);
  std::cout << csv;
  return 0;
}

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      default: out += c;
    }
  }
  return out;
}

void print_error(const std::string& code, const std::string& message,
                 const std::string& field = {}) {
  std::cerr << "{\"error\":\"" << code << '"';
  if (!field.empty()) std::cerr << ",\"field\":\"" << json_escape(field) << '"';
  std::cerr << ",\"message\":\"" << json_escape(message) << "\"}\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eco-driving at a signalised intersection: simulate, train, evaluate"};
  app.require_subcommand(1);

  AppConfig defaults;
  const std::vector<ConfigKey> keys = config_keys(defaults);

  CommonArgs run_args, train_args, sweep_args, base_args;
  auto* run = app.add_subcommand("run", "one scenario -> metrics.json (+ trajectories.csv)");
  auto* trn = app.add_subcommand("train", "train a policy -> policy.txt + learning_curve.csv");
  auto* swp = app.add_subcommand("sweep", "penetration sweep of a checkpoint -> sweep.csv");
  auto* bas = app.add_subcommand("baseline", "IDM variants and EcoGlide -> baseline.csv");
  add_common(run, run_args, keys);
  add_common(trn, train_args, keys);
  add_common(swp, sweep_args, keys);
  add_common(bas, base_args, keys);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (run->parsed()) return cmd_run(run_args);
    if (trn->parsed()) return cmd_train(train_args);
    if (swp->parsed()) return cmd_sweep(sweep_args);
    return cmd_baseline(base_args);
  } catch (const ConfigError& e) {
    print_error(e.code(), e.what(), e.field());
    return 2;
  } catch (const Error& e) {
    print_error(e.code(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
}
