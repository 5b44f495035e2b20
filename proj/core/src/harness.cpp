#include "ecodrive/harness.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>

#include "ecodrive/config.hpp"
#include "ecodrive/errors.hpp"

namespace ecodrive {

World run_episode(std::shared_ptr<const EnvConfig> config, const Scenario& scenario,
                  std::uint64_t world_seed, const EpisodeOptions& options) {
  World world = reset(config, scenario, world_seed);
  Rng action_rng = make_rng(options.action_seed, {0xac710});
  Limits limits = config->limits;
  limits.v_max = config->scenario.speed_limit_mps;
  std::map<std::uint64_t, double> actions;
  while (!world.done()) {
    actions.clear();
    if (!world.in_warmup()) {
      const CavObservations obs = observe_all(world);
      if (!obs.ids.empty()) {
        if (options.policy == nullptr) {
          throw ValidationError("scenario has policy CAVs but no policy was given");
        }
        const auto samples =
            policy_actions(obs.matrix, *options.policy, options.mode, action_rng, limits);
        for (std::size_t i = 0; i < obs.ids.size(); ++i) actions[obs.ids[i]] = samples[i].applied;
      }
    }
    step(world, actions);
  }
  return world;
}

double throughput_per_green(const std::vector<StopLineCrossing>& crossings, const SignalPlan& plan,
                            int approach, double from, double to) {
  const int phase = plan.phase_of(approach);
  const double cycle = plan.cycle_s();
  const double len = plan.phases[phase].green_s + plan.phases[phase].yellow_s;
  const double first_start = plan.offset_s + plan.phase_start(phase);
  // Earliest window start >= from.
  double start = first_start + std::ceil((from - first_start) / cycle - 1e-9) * cycle;
  int windows = 0;
  long count = 0;
  for (; start + len <= to + 1e-9; start += cycle) {
    ++windows;
    for (const auto& c : crossings) {
      if (c.approach == approach && c.t > start && c.t <= start + len) ++count;
    }
  }
  return windows == 0 ? 0.0 : static_cast<double>(count) / windows;
}

MetricsReport measure(const World& world) {
  const Scenario& sc = world.scenario();
  const double warmup_t = sc.config.warmup_steps * sc.config.dt_s;
  const double horizon_t = sc.config.horizon_s();
  MetricsReport m;
  double fuel = 0.0, co2 = 0.0, speed = 0.0, stops = 0.0;
  for (const auto& v : world.finished()) {
    if (v.entry_time < warmup_t - 1e-9 || !v.exit_time) continue;
    ++m.vehicles;
    fuel += v.cumulative_fuel;
    co2 += v.cumulative_co2;
    speed += sc.network.route_length(v.approach) / (*v.exit_time - v.entry_time);
    stops += v.stop_count;
  }
  if (m.vehicles > 0) {
    m.fuel_l = fuel / m.vehicles;
    m.co2_kg = co2 / m.vehicles;
    m.speed_mps = speed / m.vehicles;
    m.stops_per_vehicle = stops / m.vehicles;
  } else {
    m.no_vehicles_warning = true;
  }
  double total = 0.0;
  for (int a = 0; a < kNumApproaches; ++a) {
    m.throughput_per_green[a] =
        throughput_per_green(world.crossings(), sc.plan, a, warmup_t, horizon_t);
    total += m.throughput_per_green[a];
  }
  m.throughput = total / kNumApproaches;
  m.duration_s = horizon_t;
  m.config_digest = config_digest(world.config());
  return m;
}

RunResult run_scenario(std::shared_ptr<const EnvConfig> config, std::uint64_t seed,
                       int n_replicates, const EpisodeOptions& options) {
  if (n_replicates < 1) throw ValidationError("n_replicates must be >= 1");
  ScenarioConfig sc = config->scenario;
  sc.seed = seed;
  const Scenario scenario = build_scenario(sc);
  RunResult result;
  MetricsReport& mean = result.report;
  int with_vehicles = 0;
  for (int r = 0; r < n_replicates; ++r) {
    EpisodeOptions opt = options;
    opt.action_seed = options.action_seed ^ (0x9e3779b97f4a7c15ull * (r + 1));
    const World world = run_episode(config, scenario, seed * 1000003ull + r, opt);
    const MetricsReport m = measure(world);
    if (r == 0) result.trajectory = world.trajectory();
    result.replicates.push_back(m);
    if (!m.no_vehicles_warning) ++with_vehicles;
    mean.vehicles += m.vehicles;
    mean.fuel_l += m.fuel_l;
    mean.co2_kg += m.co2_kg;
    mean.speed_mps += m.speed_mps;
    mean.stops_per_vehicle += m.stops_per_vehicle;
    for (int a = 0; a < kNumApproaches; ++a) {
      mean.throughput_per_green[a] += m.throughput_per_green[a] / n_replicates;
    }
    mean.throughput += m.throughput / n_replicates;
    mean.duration_s = m.duration_s;
    mean.config_digest = m.config_digest;
  }
  mean.replicates = n_replicates;
  mean.vehicles /= n_replicates;
  if (with_vehicles > 0) {
    mean.fuel_l /= with_vehicles;
    mean.co2_kg /= with_vehicles;
    mean.speed_mps /= with_vehicles;
    mean.stops_per_vehicle /= with_vehicles;
  } else {
    mean.no_vehicles_warning = true;
  }
  return result;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double fuel_improvement(double baseline, double treated) {
  if (baseline == treated) return 0.0;
  return (baseline - treated) / baseline * 100.0;
}

double speed_improvement(double baseline, double treated) {
  if (baseline == treated) return 0.0;
  return (treated - baseline) / baseline * 100.0;
}

SweepResult penetration_sweep(const PolicyParams& policy, const EnvConfig& base,
                              ControllerKind human_model, const std::vector<double>& percents,
                              const std::vector<std::uint64_t>& seeds, int n_replicates) {
  std::vector<double> grid = percents;
  if (std::find(grid.begin(), grid.end(), 0.0) == grid.end()) grid.insert(grid.begin(), 0.0);
  SweepResult out;
  EpisodeOptions opt;
  opt.policy = &policy;
  opt.mode = ActionMode::kMean;
  for (std::uint64_t seed : seeds) {
    auto baseline_cfg = std::make_shared<EnvConfig>(base);
    baseline_cfg->scenario.human_model = human_model;
    baseline_cfg->scenario.penetration_pct = 0.0;
    const MetricsReport baseline = run_scenario(baseline_cfg, seed, n_replicates, opt).report;
    for (double pct : grid) {
      SweepCell cell;
      cell.penetration_pct = pct;
      cell.human_model = human_model;
      cell.seed = seed;
      cell.baseline = baseline;
      if (pct == 0.0) {
        cell.treated = baseline;
      } else {
        auto cfg = std::make_shared<EnvConfig>(*baseline_cfg);
        cfg->scenario.penetration_pct = pct;
        cfg->scenario.cav_controller = ControllerKind::kPolicy;
        cell.treated = run_scenario(cfg, seed, n_replicates, opt).report;
      }
      if (pct != 0.0 && (baseline.no_vehicles_warning || cell.treated.no_vehicles_warning)) {
        // Nothing to compare: an empty population is not a 100% saving.
        cell.fuel_improvement_pct = cell.co2_improvement_pct = cell.speed_improvement_pct =
            std::numeric_limits<double>::quiet_NaN();
      } else {
        cell.fuel_improvement_pct = fuel_improvement(baseline.fuel_l, cell.treated.fuel_l);
        cell.co2_improvement_pct = fuel_improvement(baseline.co2_kg, cell.treated.co2_kg);
        cell.speed_improvement_pct = speed_improvement(baseline.speed_mps, cell.treated.speed_mps);
      }
      out.cells.push_back(cell);
    }
  }
  return out;
}

std::string trajectories_csv(const std::vector<TrajectoryRecord>& log) {
  std::vector<const TrajectoryRecord*> rows;
  rows.reserve(log.size());
  for (const auto& r : log) rows.push_back(&r);
  std::stable_sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) {
    return a->t != b->t ? a->t < b->t : a->id < b->id;
  });
  std::string out = "t,veh_id,approach,pos_m,vel_mps,accel_mps2,fuel_Lps,co2_mgps\n";
  out.reserve(out.size() + rows.size() * 64);
  for (const auto* r : rows) {
    fmt::format_to(std::back_inserter(out), "{},{},{},{},{},{},{},{}\n", r->t, r->id,
                   to_string(static_cast<Direction>(r->approach)), r->pos, r->vel, r->accel,
                   r->fuel_rate, r->co2_rate);
  }
  return out;
}

void export_trajectories(const std::vector<TrajectoryRecord>& log,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << trajectories_csv(log);
  if (!out) throw IoError("failed writing " + path.string());
}

std::string metrics_json(const MetricsReport& m) {
  nlohmann::ordered_json j;
  j["vehicles"] = m.vehicles;
  j["fuel_l_per_vehicle"] = m.fuel_l;
  j["co2_kg_per_vehicle"] = m.co2_kg;
  j["mean_speed_mps"] = m.speed_mps;
  j["stops_per_vehicle"] = m.stops_per_vehicle;
  nlohmann::ordered_json tp;
  for (int a = 0; a < kNumApproaches; ++a) {
    tp[to_string(static_cast<Direction>(a))] = m.throughput_per_green[a];
  }
  j["throughput_per_green"] = tp;
  j["throughput_per_green_mean"] = m.throughput;
  j["duration_s"] = m.duration_s;
  j["replicates"] = m.replicates;
  j["config_digest"] = m.config_digest;
  j["warning_no_vehicles"] = m.no_vehicles_warning;
  return j.dump(2) + "\n";
}

std::string sweep_csv(const SweepResult& result) {
  std::string out =
      "human_model,penetration_pct,seed,fuel_l,co2_kg,speed_mps,throughput,"
      "baseline_fuel_l,baseline_co2_kg,baseline_speed_mps,fuel_improvement_pct,"
      "co2_improvement_pct,speed_improvement_pct\n";
  for (const auto& c : result.cells) {
    fmt::format_to(std::back_inserter(out), "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                   to_string(c.human_model), c.penetration_pct, c.seed, c.treated.fuel_l,
                   c.treated.co2_kg, c.treated.speed_mps, c.treated.throughput, c.baseline.fuel_l,
                   c.baseline.co2_kg, c.baseline.speed_mps, c.fuel_improvement_pct,
                   c.co2_improvement_pct, c.speed_improvement_pct);
  }
  return out;
}

}  // namespace ecodrive
