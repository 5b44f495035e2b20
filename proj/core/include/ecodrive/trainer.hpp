#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ecodrive/controllers.hpp"
#include "ecodrive/environment.hpp"

namespace ecodrive {

struct TrainConfig {
  double gamma = 0.99;
  double kl_bound = 0.01;
  int batch_steps = 8000;  // CAV-step tuples per iteration (lower bound)
  int iterations = 200;
  std::uint64_t seed = 0;
  int eval_every = 10;  // 0 disables the deterministic evaluation
  int eval_replicates = 1;

  int cg_iters = 10;
  double cg_damping = 0.1;
  double backtrack_ratio = 0.8;
  int max_backtracks = 10;
  int fvp_subsample = 4000;  // tuples used for Fisher products; 0 = all
  bool normalize_advantages = true;

  double critic_lr = 1e-3;
  int critic_epochs = 5;
  int critic_minibatch = 256;

  int hidden = 64;
  double initial_std = 0.5;

  EnvConfig env;
};

void validate(const TrainConfig& config);

// One contiguous run of tuples belonging to a single CAV in one episode.
struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool terminal = false;  // the vehicle left the network; otherwise truncated
};

struct RolloutBatch {
  Eigen::MatrixXd obs;       // one column per tuple
  Eigen::VectorXd actions;   // raw Gaussian draws
  Eigen::VectorXd logprobs;  // under the behaviour policy
  Eigen::VectorXd rewards;
  Eigen::VectorXd returns;
  Eigen::VectorXd advantages;
  std::vector<Segment> segments;

  int episodes = 0;
  double mean_segment_return = 0.0;  // undiscounted, per CAV trip
  double mean_fuel_l = 0.0;
  double mean_speed_mps = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(actions.size()); }
};

// Runs whole episodes with sampled actions until at least n_steps tuples are
// gathered. Episode k uses world and action streams derived from (seed, k).
RolloutBatch collect_rollouts(const PolicyParams& policy, std::shared_ptr<const EnvConfig> env,
                              int n_steps, std::uint64_t seed);

// Discounted returns within segments (no bootstrap on truncation) and
// advantage = return - critic(obs), optionally normalised.
void estimate_advantages(RolloutBatch& batch, const PolicyParams& critic, double gamma,
                         bool normalize = true);

struct UpdateInfo {
  bool accepted = false;
  bool aborted = false;      // non-finite gradient
  double kl = 0.0;           // mean KL(old || new) of the accepted step
  double improvement = 0.0;  // surrogate gain of the accepted step
  int backtracks = 0;
  double grad_norm = 0.0;
  std::string diagnostic;
};

UpdateInfo policy_update(const RolloutBatch& batch, PolicyParams& policy,
                         const TrainConfig& config);

// Surrogate E[ratio * A] and mean KL(old || candidate) over the batch, with
// `old_log_std`/logprobs taken from the batch.
double surrogate(const RolloutBatch& batch, const PolicyParams& candidate);
double mean_kl(const RolloutBatch& batch, const PolicyParams& old_policy,
               const PolicyParams& candidate);
// Exact gradient of surrogate() w.r.t. actor_flat().
Eigen::VectorXd surrogate_gradient(const RolloutBatch& batch, const PolicyParams& policy);

struct CriticFitInfo {
  std::vector<double> epoch_losses;  // loss after each epoch, normalised units
};

CriticFitInfo fit_critic(const RolloutBatch& batch, PolicyParams& critic, int epochs, double lr,
                         int minibatch, std::uint64_t seed);

struct LearningRecord {
  int iteration = 0;
  double mean_return = 0.0;
  double mean_fuel_l = 0.0;
  double mean_speed_mps = 0.0;
  double kl = 0.0;
  bool accepted = false;
  int tuples = 0;
  bool evaluated = false;  // eval_* fields valid
  double eval_fuel_l = 0.0;
  double eval_speed_mps = 0.0;
};

struct TrainResult {
  PolicyParams policy;
  std::vector<LearningRecord> curve;
};

using ProgressFn = std::function<void(const LearningRecord&)>;

TrainResult train(const TrainConfig& config, const ProgressFn& progress = {});

std::string learning_curve_csv(const std::vector<LearningRecord>& curve);

}  // namespace ecodrive
