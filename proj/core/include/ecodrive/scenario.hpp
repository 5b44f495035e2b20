#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ecodrive/controller_kind.hpp"

namespace ecodrive {

inline constexpr int kNumApproaches = 4;

// Inbound direction of travel. Phase 0 serves the north/south pair, phase 1
// the east/west pair.
enum class Direction { kNorth = 0, kSouth = 1, kEast = 2, kWest = 3 };

const char* to_string(Direction d);

struct Approach {
  Direction direction = Direction::kNorth;
  double length_m = 250.0;           // inbound leg, entry at pos 0
  double outbound_length_m = 250.0;  // matching outbound leg
  double speed_limit_mps = 15.0;
  double stop_line_pos = 250.0;  // position of the intersection entry
};

// Four inbound + four outbound single-lane legs around one box. Positions are
// measured along each approach's own axis: [0, stop_line) inbound, then the
// box, then the outbound leg up to route_length().
struct RoadNetwork {
  std::array<Approach, kNumApproaches> approaches{};
  double intersection_length_m = 10.0;

  double route_length(int approach) const {
    const auto& a = approaches.at(approach);
    return a.stop_line_pos + intersection_length_m + a.outbound_length_m;
  }
};

struct SignalPhase {
  std::vector<int> served_approaches;
  double green_s = 30.0;
  double yellow_s = 4.0;
};

struct SignalPlan {
  std::vector<SignalPhase> phases;
  double offset_s = 0.0;  // absolute time at which phase 0 green starts

  double cycle_s() const;
  // Index of the phase serving `approach`; every approach has exactly one.
  int phase_of(int approach) const;
  // Start of phase `k`'s green relative to the cycle start.
  double phase_start(int k) const;
};

enum class Indication { kGreen, kYellow, kRed };

struct PhaseState {
  int active_phase_index = 0;
  std::array<Indication, kNumApproaches> indication{};
  std::array<double, kNumApproaches> time_to_green{};  // 0 while green
};

// Absolute [start, end) of a green interval.
struct GreenWindow {
  double start = 0.0;
  double end = 0.0;
};

struct Arrival {
  double entry_time_s = 0.0;
  double entry_speed_mps = 10.0;
  ControllerKind kind = ControllerKind::kVanillaIdm;
};

struct ArrivalSchedule {
  std::array<std::vector<Arrival>, kNumApproaches> per_approach{};

  std::size_t size() const;
  bool empty() const { return size() == 0; }
};

struct ScenarioConfig {
  double approach_length_m = 250.0;
  double outbound_length_m = 250.0;
  double intersection_length_m = 10.0;
  double speed_limit_mps = 15.0;
  double entry_speed_mps = 10.0;
  double vehicle_length_m = 5.0;

  // Deterministic inflow. When inflow_per_approach is false the rate is the
  // intersection total and is split evenly over the four approaches.
  double inflow_veh_per_hr = 800.0;
  bool inflow_per_approach = true;

  double penetration_pct = 100.0;
  ControllerKind human_model = ControllerKind::kVanillaIdm;
  ControllerKind cav_controller = ControllerKind::kPolicy;

  double green_s = 30.0;
  double yellow_s = 4.0;
  double signal_offset_s = 0.0;

  // World clock.
  double dt_s = 0.5;
  int horizon_steps = 600;
  int warmup_steps = 100;

  std::uint64_t seed = 0;

  double horizon_s() const { return dt_s * horizon_steps; }
  double per_approach_inflow() const {
    return inflow_per_approach ? inflow_veh_per_hr : inflow_veh_per_hr / kNumApproaches;
  }
};

struct Scenario {
  ScenarioConfig config;
  RoadNetwork network;
  SignalPlan plan;
  ArrivalSchedule arrivals;
};

// Throws ConfigError naming the first offending field.
void validate(const ScenarioConfig& config);

Scenario build_scenario(const ScenarioConfig& config);

PhaseState signal_state(const SignalPlan& plan, double t);

// The green interval of `approach` that contains t, or the next one.
GreenWindow green_window(const SignalPlan& plan, int approach, double t);

// Tags round(N * pct / 100) arrivals as `cav_kind` and the rest as
// `human_model`. The total is exact; each approach gets the floor or ceiling
// of its proportional share, spread evenly along its arrival sequence with a
// seed-dependent phase.
ArrivalSchedule assign_controllers(ArrivalSchedule schedule, double penetration_pct,
                                   ControllerKind human_model, std::uint64_t seed,
                                   ControllerKind cav_kind = ControllerKind::kPolicy);

}  // namespace ecodrive
