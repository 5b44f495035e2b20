#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "ecodrive/dynamics.hpp"
#include "ecodrive/network.hpp"
#include "ecodrive/observation.hpp"
#include "ecodrive/rng.hpp"
#include "ecodrive/scenario.hpp"

namespace ecodrive {

// ---------------------------------------------------------------------------
// Human drivers

// V-IDM returns idm_accel unchanged; N-IDM and M-IDM add unif(-w, w) noise
// drawn from the vehicle's own stream. M-IDM differs only in that `params`
// were sampled per driver (see sample_idm_params).
double control_human(ControllerKind kind, const VehicleState& ego,
                     const std::optional<LeaderView>& effective_leader, const IdmParams& params,
                     double noise_halfwidth, Rng& noise);

// ---------------------------------------------------------------------------
// EcoGlide: signal-aware glide planner. Knows the fixed-time plan and its
// leader's planned stop-line arrival (V2V), and picks the earliest arrival
// time that falls inside a green window, is reachable, and keeps a slot
// headway behind the leader. To land on that time it cruises slowly, then
// ramps up at comfort_accel so the line is passed at arrival_speed. When the cruise speed would
// drop below v_min_glide it gives up and stops at the line like IDM.

struct GlideSettings {
  double v_min_glide = 2.0;      // m/s
  double comfort_accel = 1.0;    // m/s^2
  double comfort_decel = 1.5;    // m/s^2
  double tracking_time_s = 1.5;  // speed-tracking time constant
  double slot_headway_s = 1.8;   // min arrival spacing behind the leader
  double green_entry_buffer_s = 1.5;
  double arrival_speed = 15.0;  // m/s at the stop line, capped by v_max
};

struct GlideContext {
  const SignalPlan* plan = nullptr;
  int approach = 0;
  double now = 0.0;
  double stop_line = 0.0;
  std::optional<LeaderView> leader;              // real vehicle ahead
  std::optional<double> leader_planned_arrival;  // if the leader shares one
};

struct GlideCommand {
  double accel = 0.0;
  std::optional<double> planned_arrival;  // absolute time at the stop line
  bool stopping = false;
};

GlideCommand control_eco_glide(const VehicleState& ego, const GlideContext& ctx,
                               const IdmParams& idm, const Limits& limits,
                               const GlideSettings& settings);

// ---------------------------------------------------------------------------
// Learned policy

struct PolicyParams {
  Mlp actor;             // observation -> action mean
  double log_std = 0.0;  // state-independent
  Mlp critic;            // observation -> normalised value
  double value_shift = 0.0;
  double value_scale = 1.0;

  int obs_size() const { return actor.input_size(); }
  // Actor parameters followed by log_std.
  Eigen::VectorXd actor_flat() const;
  void set_actor_flat(const Eigen::VectorXd& theta);
  int num_actor_params() const { return actor.num_params() + 1; }

  // Critic prediction in return units for a batch of observations.
  Eigen::VectorXd value(const Eigen::MatrixXd& obs) const;
};

// Two tanh hidden layers of `hidden` units for both heads. Actor output layer
// is scaled down so the initial mean action is near zero.
PolicyParams make_policy(int obs_size, std::uint64_t seed, int hidden = 64,
                         double initial_std = 0.5);

// Throws ValidationError on non-finite entries or inconsistent shapes.
void validate(const PolicyParams& params);

enum class ActionMode { kSample, kMean };

struct PolicySample {
  double raw = 0.0;      // Gaussian draw (or the mean), before clamping
  double applied = 0.0;  // clamped into [a_min, a_max]
};

PolicySample policy_action(const Observation& obs, const PolicyParams& params, ActionMode mode,
                           Rng& rng, const Limits& limits);

// Same for a batch (one observation per column). Draws are taken column by
// column from `rng`.
std::vector<PolicySample> policy_actions(const Eigen::MatrixXd& obs, const PolicyParams& params,
                                         ActionMode mode, Rng& rng, const Limits& limits);

struct LogProbGrad {
  double logprob = 0.0;
  Eigen::VectorXd grad;  // w.r.t. actor_flat()
};

// Gaussian log-density of `action` and its exact gradient.
LogProbGrad policy_logprob_and_grad(const Observation& obs, double action,
                                    const PolicyParams& params);
double policy_logprob(const Observation& obs, double action, const PolicyParams& params);

// Text checkpoint: a versioned header with layer shapes, then every parameter
// as a hex float, so save/load round-trips bit for bit.
void save_policy(const PolicyParams& params, const std::filesystem::path& path);
PolicyParams load_policy(const std::filesystem::path& path);
std::string serialize_policy(const PolicyParams& params);
PolicyParams deserialize_policy(const std::string& text);

}  // namespace ecodrive
