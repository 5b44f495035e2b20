#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "ecodrive/controllers.hpp"
#include "ecodrive/dynamics.hpp"
#include "ecodrive/energy.hpp"
#include "ecodrive/observation.hpp"
#include "ecodrive/scenario.hpp"

namespace ecodrive {

struct CommsConfig {
  double r_v2v = 50.0;   // m
  double r_i2v = 250.0;  // m
};

struct RewardCoeffs {
  double mu1 = -100.0;
  double mu2 = -5.0;
  double mu3 = 5.0;
  double mu4 = -5.0;
  double mu5 = 5.0;
  double mu6 = -10.0;
  double mu7 = -7.0;
  double mu8 = -3.0;
  double mu9 = 1000.0;
  double mu10 = 4.0;
  double mu11 = -10.0;
  double delta = 0.01;
  double exp_clamp = 30.0;  // every exponent is clipped to this before exp()
};

// Fleet statistics of one phase group for one step.
struct PhaseGroupStats {
  double fuel = 0.0;     // normalised mean per-vehicle step fuel, [0, 1]
  double speed = 0.0;    // normalised mean speed, [0, 1]
  double stopped = 0.0;  // fraction of the group that is stopped
  bool approach_start_stop = false;
  int size = 0;
};

// Everything a world needs besides the arrivals.
struct EnvConfig {
  ScenarioConfig scenario;
  IdmParams idm;
  HumanDriverModel human;  // `kind` is taken from scenario.human_model
  Limits limits;           // v_max is overwritten by the speed limit
  CommsConfig comms;
  RewardCoeffs reward;
  EnergyModel energy;
  GlideSettings glide;
  double start_zone_m = 20.0;    // "start of an approach" for the stop penalty
  double min_entry_gap_m = 1.5;  // entrance must have at least this gap free
  std::optional<double> h_max;   // reported only, never enforced
  bool record_trajectories = false;
};

void validate(const EnvConfig& config);

struct TrajectoryRecord {
  double t = 0.0;
  std::uint64_t id = 0;
  int approach = 0;
  double pos = 0.0;
  double vel = 0.0;
  double accel = 0.0;
  double fuel_rate = 0.0;  // L/s
  double co2_rate = 0.0;   // mg/s
};

struct StopLineCrossing {
  double t = 0.0;
  std::uint64_t id = 0;
  int approach = 0;
};

// Observations of every policy-controlled vehicle, one column per vehicle.
struct CavObservations {
  std::vector<std::uint64_t> ids;
  Eigen::MatrixXd matrix;
};

struct StepResult;

class World {
 public:
  struct Vehicle {
    VehicleState state;
    IdmParams idm;
    Rng noise;
    std::optional<double> planned_arrival;
  };

  World(std::shared_ptr<const EnvConfig> config, Scenario scenario, std::uint64_t seed);

  const EnvConfig& config() const { return *config_; }
  std::shared_ptr<const EnvConfig> config_ptr() const { return config_; }
  const Scenario& scenario() const { return scenario_; }
  std::uint64_t seed() const { return seed_; }

  int step_index() const { return step_; }
  double time() const { return step_ * scenario_.config.dt_s; }
  bool done() const { return step_ >= scenario_.config.horizon_steps; }
  bool in_warmup() const { return step_ < scenario_.config.warmup_steps; }

  // Vehicles on one approach, front-most first.
  const std::vector<Vehicle>& lane(int approach) const { return lanes_.at(approach); }
  std::size_t num_vehicles() const;
  const VehicleState* find(std::uint64_t id) const;
  // Policy-controlled vehicles currently in the network, ascending id.
  std::vector<std::uint64_t> cav_ids() const;

  const std::vector<VehicleState>& finished() const { return finished_; }
  const std::vector<TrajectoryRecord>& trajectory() const { return trajectory_; }
  const std::vector<StopLineCrossing>& crossings() const { return crossings_; }
  double recorded_reward_total() const { return recorded_reward_; }
  // Arrivals still waiting for the entrance to clear, over all approaches.
  std::size_t pending_arrivals() const;

  // Places a vehicle directly on an approach, bypassing the arrival schedule
  // (scripted set-ups). Returns its id. Throws ValidationError when it would
  // overlap a vehicle already there.
  std::uint64_t spawn(int approach, double pos, double vel, ControllerKind kind);

 private:
  friend StepResult step(World& world, const std::map<std::uint64_t, double>& actions);

  std::shared_ptr<const EnvConfig> config_;
  Scenario scenario_;
  std::uint64_t seed_ = 0;
  int step_ = 0;
  std::uint64_t next_id_ = 0;
  std::array<std::vector<Vehicle>, kNumApproaches> lanes_{};
  std::array<std::size_t, kNumApproaches> next_arrival_{};
  std::vector<VehicleState> finished_;
  std::vector<TrajectoryRecord> trajectory_;
  std::vector<StopLineCrossing> crossings_;
  double recorded_reward_ = 0.0;
};

struct StepResult {
  CavObservations observations;             // after the step
  std::map<std::uint64_t, double> rewards;  // CAVs that acted; empty during warm-up
  std::vector<std::uint64_t> exited;        // policy CAVs that left during the step
  std::vector<PhaseGroupStats> stats;       // per phase, after the step
  std::vector<double> phase_rewards;
  bool recorded = false;  // false during warm-up
  bool done = false;
};

World reset(std::shared_ptr<const EnvConfig> config, std::uint64_t seed);
World reset(std::shared_ptr<const EnvConfig> config, const Scenario& scenario, std::uint64_t seed);

// Throws LookupError for unknown ids and for vehicles that are not
// policy-controlled.
Observation observe(const World& world, std::uint64_t cav_id);
CavObservations observe_all(const World& world);

PhaseGroupStats phase_stats(const World& world, int phase_index);

// Tests R1..R4 in order; exactly one fires.
double reward(const PhaseGroupStats& stats, const RewardCoeffs& coeffs);
int reward_branch(const PhaseGroupStats& stats, const RewardCoeffs& coeffs);

// Advances one step. `actions` must hold a finite acceleration for every
// policy CAV once warm-up is over; during warm-up those vehicles drive V-IDM
// and actions are ignored. Throws ValidationError on NaN/inf or missing
// actions, and when called on a finished world.
StepResult step(World& world, const std::map<std::uint64_t, double>& actions);

}  // namespace ecodrive
