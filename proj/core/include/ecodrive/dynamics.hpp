#pragma once

#include <cstdint>
#include <optional>

#include "ecodrive/controller_kind.hpp"
#include "ecodrive/rng.hpp"
#include "ecodrive/scenario.hpp"

namespace ecodrive {

struct VehicleState {
  std::uint64_t id = 0;
  int approach = 0;
  double pos = 0.0;    // front bumper, metres along the approach axis
  double vel = 0.0;    // m/s, >= 0
  double accel = 0.0;  // last applied, m/s^2
  double length_m = 5.0;
  ControllerKind kind = ControllerKind::kVanillaIdm;
  double cumulative_fuel = 0.0;  // L
  double cumulative_co2 = 0.0;   // kg
  double scheduled_entry_time = 0.0;
  double entry_time = 0.0;
  std::optional<double> exit_time;
  int stop_count = 0;
  bool stopped_flag = false;
};

struct IdmParams {
  double v0 = 30.0;    // desired speed, m/s
  double T = 1.0;      // time headway, s
  double h0 = 1.5;     // jam distance, m
  double c = 1.0;      // maximum acceleration, m/s^2
  double b = 1.5;      // comfortable deceleration, m/s^2
  double delta = 4.0;  // free-road exponent
};

void validate(const IdmParams& p);

struct HumanDriverModel {
  ControllerKind kind = ControllerKind::kVanillaIdm;
  double noise_halfwidth = 0.2;   // m/s^2, N-IDM and M-IDM
  double param_rel_std = 0.10;    // M-IDM Gaussian std as a fraction of the mean
  double param_truncation = 2.0;  // in standard deviations
};

// Per-driver parameters. Only M-IDM draws from `rng`; the other kinds return
// `base` unchanged. Draws v0, T, h0, c and b; delta stays fixed.
IdmParams sample_idm_params(const HumanDriverModel& model, const IdmParams& base, Rng& rng);

struct Limits {
  double a_min = -3.0;
  double a_max = 3.0;
  double v_max = 15.0;  // speed limit; integration never exceeds it
  double h_min = 1.0;   // guard headway, m
  double stop_speed = 0.1;
};

// What a follower needs to know about the vehicle (or stop line) ahead.
struct LeaderView {
  double pos = 0.0;  // front bumper
  double vel = 0.0;
  double length = 0.0;
};

inline LeaderView leader_view(const VehicleState& v) { return {v.pos, v.vel, v.length_m}; }

// Bumper-to-bumper gap.
inline double gap_to(const VehicleState& ego, const LeaderView& leader) {
  return leader.pos - leader.length - ego.pos;
}

// IDM acceleration. Without a leader only the free-road term applies.
// Throws SafetyViolation when the gap to the leader is not positive.
double idm_accel(double vel, std::optional<double> gap, double leader_vel, const IdmParams& p);
double idm_accel(const VehicleState& ego, const std::optional<LeaderView>& leader,
                 const IdmParams& p);

// Virtual zero-length stopped leader at the stop line, if the signal requires
// the vehicle to stop. Yellow: stop only if v^2 / 2b fits before the line.
// Red: stop unless the vehicle can no longer halt before the line even at
// a_min (it committed during yellow).
std::optional<LeaderView> red_light_leader(const VehicleState& ego, Indication indication,
                                           double stop_line, double comfortable_decel,
                                           const Limits& limits, double dt);

// The closer of two optional leaders (by gap).
std::optional<LeaderView> nearer_leader(const VehicleState& ego, const std::optional<LeaderView>& a,
                                        const std::optional<LeaderView>& b);

// Distance covered in one step from speed v under constant a, with the speed
// truncated at zero: ((v + v') / 2) * dt.
double step_distance(double v, double a, double dt);

// Distance to standstill when braking at `decel` (> 0) every step from v,
// under the same discrete update as step_vehicle.
double braking_distance(double v, double decel, double dt);

// Applies a = clamp(a_cmd, a_min, a_max), further capped so that v' <= v_max,
// then v' = max(0, v + a dt) and pos' = pos + ((v + v') / 2) dt. Updates the
// stop bookkeeping. Energy tallies are untouched.
VehicleState step_vehicle(const VehicleState& state, double a_cmd, double dt, const Limits& limits);

// min(a_cmd, a_safe): a_safe is the largest acceleration in [a_min, a_max]
// after which the vehicle can still stop at least h_min behind the leader
// even if the leader brakes at a_min from now on. This implies the next-step
// gap stays >= h_min when the leader holds its speed. Falls back to a_min
// when nothing is safe.
double safety_guard(const VehicleState& ego, const std::optional<LeaderView>& leader, double a_cmd,
                    double dt, const Limits& limits);

}  // namespace ecodrive
