#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ecodrive/controllers.hpp"
#include "ecodrive/environment.hpp"

namespace ecodrive {

struct MetricsReport {
  int vehicles = 0;        // vehicles in the measured population
  double fuel_l = 0.0;     // per-vehicle mean
  double co2_kg = 0.0;     // per-vehicle mean
  double speed_mps = 0.0;  // per-vehicle trip speed, averaged
  double stops_per_vehicle = 0.0;
  std::array<double, kNumApproaches> throughput_per_green{};
  double throughput = 0.0;  // mean of the per-approach values
  double duration_s = 0.0;  // simulated time per replicate
  int replicates = 1;
  std::string config_digest;
  bool no_vehicles_warning = false;
};

// One finished episode. Controllers come from the scenario's arrival
// assignment; policy CAVs need `policy`.
struct EpisodeOptions {
  const PolicyParams* policy = nullptr;
  ActionMode mode = ActionMode::kMean;
  std::uint64_t action_seed = 0;
};

World run_episode(std::shared_ptr<const EnvConfig> config, const Scenario& scenario,
                  std::uint64_t world_seed, const EpisodeOptions& options = {});

// Metrics of one finished world. Vehicles count when they entered after
// warm-up and exited before the horizon.
MetricsReport measure(const World& world);

struct RunResult {
  MetricsReport report;  // mean over replicates
  std::vector<MetricsReport> replicates;
  std::vector<TrajectoryRecord> trajectory;  // replicate 0, if recorded
};

// Replicates share the arrival schedule and the controller assignment and
// differ only in the driver-noise, driver-parameter and action streams.
RunResult run_scenario(std::shared_ptr<const EnvConfig> config, std::uint64_t seed,
                       int n_replicates, const EpisodeOptions& options = {});

double median(std::vector<double> values);

struct SweepCell {
  double penetration_pct = 0.0;
  ControllerKind human_model = ControllerKind::kVanillaIdm;
  std::uint64_t seed = 0;
  MetricsReport treated;
  MetricsReport baseline;  // same human model, 0% CAV
  double fuel_improvement_pct = 0.0;
  double co2_improvement_pct = 0.0;
  double speed_improvement_pct = 0.0;
};

struct SweepResult {
  std::vector<SweepCell> cells;
};

// Frozen policy, mean actions. A 0% cell is always included.
SweepResult penetration_sweep(const PolicyParams& policy, const EnvConfig& base,
                              ControllerKind human_model, const std::vector<double>& percents,
                              const std::vector<std::uint64_t>& seeds, int n_replicates = 1);

double fuel_improvement(double baseline, double treated);
double speed_improvement(double baseline, double treated);

void export_trajectories(const std::vector<TrajectoryRecord>& log,
                         const std::filesystem::path& path);
std::string trajectories_csv(const std::vector<TrajectoryRecord>& log);

// Mean number of stop-line crossings per green window (green + yellow) on one
// approach, over the windows that lie completely inside [from, to].
double throughput_per_green(const std::vector<StopLineCrossing>& crossings, const SignalPlan& plan,
                            int approach, double from, double to);

std::string metrics_json(const MetricsReport& report);
std::string sweep_csv(const SweepResult& result);

}  // namespace ecodrive
