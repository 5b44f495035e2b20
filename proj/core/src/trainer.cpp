#include "ecodrive/trainer.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "ecodrive/errors.hpp"
#include "ecodrive/harness.hpp"

namespace ecodrive {

void validate(const TrainConfig& c) {
  validate(c.env);
  if (!(c.gamma > 0.0 && c.gamma <= 1.0)) throw ConfigError("train.gamma", "must be in (0, 1]");
  if (!(c.kl_bound > 0.0)) throw ConfigError("train.kl_bound", "must be > 0");
  if (c.batch_steps < c.env.scenario.horizon_steps) {
    throw ConfigError("train.batch_steps", "must be >= the horizon");
  }
  if (c.iterations < 0) throw ConfigError("train.iterations", "must be >= 0");
  if (c.eval_every < 0) throw ConfigError("train.eval_every", "must be >= 0");
  if (c.eval_replicates < 1) throw ConfigError("train.eval_replicates", "must be >= 1");
  if (c.cg_iters < 1) throw ConfigError("train.cg_iters", "must be >= 1");
  if (!(c.cg_damping >= 0.0)) throw ConfigError("train.cg_damping", "must be >= 0");
  if (!(c.backtrack_ratio > 0.0 && c.backtrack_ratio < 1.0)) {
    throw ConfigError("train.backtrack_ratio", "must be in (0, 1)");
  }
  if (c.max_backtracks < 0) throw ConfigError("train.max_backtracks", "must be >= 0");
  if (c.fvp_subsample < 0) throw ConfigError("train.fvp_subsample", "must be >= 0");
  if (!(c.critic_lr > 0.0)) throw ConfigError("train.critic_lr", "must be > 0");
  if (c.critic_epochs < 0) throw ConfigError("train.critic_epochs", "must be >= 0");
  if (c.critic_minibatch < 1) throw ConfigError("train.critic_minibatch", "must be >= 1");
  if (c.hidden < 1) throw ConfigError("train.hidden", "must be >= 1");
  if (!(c.initial_std > 0.0)) throw ConfigError("train.initial_std", "must be > 0");
}

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  Rng r = make_rng(seed, tags);
  return r();
}

Eigen::VectorXd gaussian_logprob(const Eigen::VectorXd& actions, const Eigen::VectorXd& mean,
                                 double log_std) {
  const double inv_var = std::exp(-2.0 * log_std);
  return (-0.5 * (actions - mean).array().square() * inv_var - log_std - kHalfLog2Pi).matrix();
}

struct Pending {
  std::vector<double> obs;
  std::vector<double> actions;
  std::vector<double> logprobs;
  std::vector<double> rewards;
  bool terminal = false;
};

}  // namespace

RolloutBatch collect_rollouts(const PolicyParams& policy, std::shared_ptr<const EnvConfig> env,
                              int n_steps, std::uint64_t seed) {
  if (n_steps <= 0) throw ValidationError("n_steps must be > 0");
  if (env->scenario.penetration_pct <= 0.0 ||
      env->scenario.cav_controller != ControllerKind::kPolicy) {
    throw ValidationError("scenario has no policy-controlled vehicles; nothing to train");
  }
  validate(policy);
  const int obs_size = policy.obs_size();
  Limits limits = env->limits;
  limits.v_max = env->scenario.speed_limit_mps;

  std::vector<double> obs, actions, logprobs, rewards;
  std::vector<Segment> segments;
  double fuel = 0.0, speed = 0.0, segment_return = 0.0;
  int episodes = 0, measured = 0;

  while (static_cast<int>(actions.size()) < n_steps) {
    ScenarioConfig sc = env->scenario;
    sc.seed = derive_seed(seed, {static_cast<std::uint64_t>(episodes), 1});
    const Scenario scenario = build_scenario(sc);
    World world =
        reset(env, scenario, derive_seed(seed, {static_cast<std::uint64_t>(episodes), 2}));
    Rng action_rng = make_rng(seed, {static_cast<std::uint64_t>(episodes), 3});

    std::map<std::uint64_t, Pending> pending;
    std::map<std::uint64_t, double> act;
    std::map<std::uint64_t, std::size_t> column;
    while (!world.done()) {
      act.clear();
      column.clear();
      CavObservations o;
      std::vector<PolicySample> samples;
      Eigen::VectorXd lp;
      if (!world.in_warmup()) {
        o = observe_all(world);
        if (!o.ids.empty()) {
          samples = policy_actions(o.matrix, policy, ActionMode::kSample, action_rng, limits);
          Eigen::VectorXd raw(static_cast<Eigen::Index>(samples.size()));
          for (std::size_t i = 0; i < samples.size(); ++i) raw[i] = samples[i].raw;
          lp = gaussian_logprob(raw, policy.actor.forward(o.matrix).row(0).transpose(),
                                policy.log_std);
          for (std::size_t i = 0; i < o.ids.size(); ++i) {
            act[o.ids[i]] = samples[i].applied;
            column[o.ids[i]] = i;
          }
        }
      }
      const StepResult res = step(world, act);
      for (const auto& [id, r] : res.rewards) {
        const std::size_t i = column.at(id);
        Pending& p = pending[id];
        const double* col = o.matrix.col(static_cast<Eigen::Index>(i)).data();
        p.obs.insert(p.obs.end(), col, col + obs_size);
        p.actions.push_back(samples[i].raw);
        p.logprobs.push_back(lp[static_cast<Eigen::Index>(i)]);
        p.rewards.push_back(r);
      }
      for (std::uint64_t id : res.exited) {
        auto it = pending.find(id);
        if (it != pending.end()) it->second.terminal = true;
      }
    }

    for (auto& [id, p] : pending) {
      if (p.actions.empty()) continue;
      Segment s;
      s.begin = actions.size();
      obs.insert(obs.end(), p.obs.begin(), p.obs.end());
      actions.insert(actions.end(), p.actions.begin(), p.actions.end());
      logprobs.insert(logprobs.end(), p.logprobs.begin(), p.logprobs.end());
      rewards.insert(rewards.end(), p.rewards.begin(), p.rewards.end());
      s.end = actions.size();
      s.terminal = p.terminal;
      segments.push_back(s);
      segment_return += std::accumulate(p.rewards.begin(), p.rewards.end(), 0.0);
    }
    const MetricsReport m = measure(world);
    if (!m.no_vehicles_warning) {
      fuel += m.fuel_l;
      speed += m.speed_mps;
      ++measured;
    }
    ++episodes;
    if (segments.empty() && episodes >= 3) {
      throw ValidationError("no policy vehicle acted after warm-up; nothing to train");
    }
  }

  RolloutBatch b;
  const auto n = static_cast<Eigen::Index>(actions.size());
  b.obs = Eigen::Map<const Eigen::MatrixXd>(obs.data(), obs_size, n);
  b.actions = Eigen::Map<const Eigen::VectorXd>(actions.data(), n);
  b.logprobs = Eigen::Map<const Eigen::VectorXd>(logprobs.data(), n);
  b.rewards = Eigen::Map<const Eigen::VectorXd>(rewards.data(), n);
  b.returns = Eigen::VectorXd::Zero(n);
  b.advantages = Eigen::VectorXd::Zero(n);
  b.segments = std::move(segments);
  b.episodes = episodes;
  b.mean_segment_return = b.segments.empty() ? 0.0 : segment_return / b.segments.size();
  if (measured > 0) {
    b.mean_fuel_l = fuel / measured;
    b.mean_speed_mps = speed / measured;
  }
  return b;
}

void estimate_advantages(RolloutBatch& batch, const PolicyParams& critic, double gamma,
                         bool normalize) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  batch.returns.resize(n);
  for (const Segment& s : batch.segments) {
    double g = 0.0;
    for (std::size_t t = s.end; t-- > s.begin;) {
      g = batch.rewards[static_cast<Eigen::Index>(t)] + gamma * g;
      batch.returns[static_cast<Eigen::Index>(t)] = g;
    }
  }
  batch.advantages = batch.returns - critic.value(batch.obs);
  if (normalize && n > 0) {
    const double mean = batch.advantages.mean();
    batch.advantages.array() -= mean;
    const double sd = std::sqrt(batch.advantages.squaredNorm() / static_cast<double>(n));
    if (sd > 1e-12) batch.advantages /= sd;
  }
}

double surrogate(const RolloutBatch& batch, const PolicyParams& candidate) {
  if (batch.size() == 0) return 0.0;
  const Eigen::VectorXd mean = candidate.actor.forward(batch.obs).row(0).transpose();
  const Eigen::VectorXd lp = gaussian_logprob(batch.actions, mean, candidate.log_std);
  return ((lp - batch.logprobs).array().exp() * batch.advantages.array()).mean();
}

namespace {

double mean_kl_from(const Eigen::VectorXd& mean_old, double log_std_old,
                    const Eigen::VectorXd& mean_new, double log_std_new) {
  const double var_old = std::exp(2.0 * log_std_old);
  const double var_new = std::exp(2.0 * log_std_new);
  const double base = log_std_new - log_std_old + var_old / (2.0 * var_new) - 0.5;
  return base + (mean_old - mean_new).squaredNorm() / (2.0 * var_new) /
                    static_cast<double>(mean_old.size());
}

}  // namespace

double mean_kl(const RolloutBatch& batch, const PolicyParams& old_policy,
               const PolicyParams& candidate) {
  if (batch.size() == 0) return 0.0;
  return mean_kl_from(old_policy.actor.forward(batch.obs).row(0).transpose(), old_policy.log_std,
                      candidate.actor.forward(batch.obs).row(0).transpose(), candidate.log_std);
}

Eigen::VectorXd surrogate_gradient(const RolloutBatch& batch, const PolicyParams& policy) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  const int n_actor = policy.actor.num_params();
  const double var = std::exp(2.0 * policy.log_std);
  Mlp::Tape tape;
  const Eigen::VectorXd mean = policy.actor.forward(batch.obs, tape).row(0).transpose();
  const Eigen::ArrayXd diff = (batch.actions - mean).array();
  const Eigen::ArrayXd ratio =
      (gaussian_logprob(batch.actions, mean, policy.log_std) - batch.logprobs).array().exp();
  const Eigen::ArrayXd weight = ratio * batch.advantages.array() / static_cast<double>(n);
  Eigen::VectorXd g(policy.num_actor_params());
  g.head(n_actor) = policy.actor.backward(tape, (weight * diff / var).matrix().transpose());
  g[n_actor] = (weight * (diff.square() / var - 1.0)).sum();
  return g;
}

UpdateInfo policy_update(const RolloutBatch& batch, PolicyParams& policy,
                         const TrainConfig& config) {
  UpdateInfo info;
  if (batch.size() == 0) throw ValidationError("policy_update needs a non-empty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  const int n_actor = policy.actor.num_params();
  const double log_std = policy.log_std;
  const double var = std::exp(2.0 * log_std);

  const Eigen::VectorXd mean_old = policy.actor.forward(batch.obs).row(0).transpose();
  const Eigen::ArrayXd ratio =
      (gaussian_logprob(batch.actions, mean_old, log_std) - batch.logprobs).array().exp();
  const Eigen::VectorXd g = surrogate_gradient(batch, policy);
  info.grad_norm = g.norm();
  if (!g.allFinite()) {
    info.aborted = true;
    info.diagnostic = "non-finite policy gradient";
    return info;
  }
  if (info.grad_norm < 1e-12) {
    info.diagnostic = "zero gradient";
    return info;
  }

  // Fisher-vector products on a fixed subsample.
  Eigen::Index m = n;
  Eigen::MatrixXd sub_obs;
  const Eigen::MatrixXd* fvp_obs = &batch.obs;
  if (config.fvp_subsample > 0 && config.fvp_subsample < n) {
    m = config.fvp_subsample;
    sub_obs.resize(batch.obs.rows(), m);
    for (Eigen::Index k = 0; k < m; ++k) sub_obs.col(k) = batch.obs.col(k * n / m);
    fvp_obs = &sub_obs;
  }
  Mlp::Tape fvp_tape;
  policy.actor.forward(*fvp_obs, fvp_tape);
  auto fvp = [&](const Eigen::VectorXd& v) {
    const Eigen::MatrixXd jv = policy.actor.jvp(fvp_tape, v.head(n_actor));
    Eigen::VectorXd out(v.size());
    out.head(n_actor) = policy.actor.backward(fvp_tape, jv / (var * static_cast<double>(m)));
    out[n_actor] = 2.0 * v[n_actor];
    return Eigen::VectorXd(out + config.cg_damping * v);
  };

  // Conjugate gradient for F x = g.
  Eigen::VectorXd x = Eigen::VectorXd::Zero(g.size());
  Eigen::VectorXd r = g, p = g;
  double rr = r.squaredNorm();
  for (int it = 0; it < config.cg_iters && rr > 1e-20; ++it) {
    const Eigen::VectorXd fp = fvp(p);
    const double alpha = rr / p.dot(fp);
    x += alpha * p;
    r -= alpha * fp;
    const double rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  const double shs = x.dot(fvp(x));
  if (!(shs > 0.0) || !std::isfinite(shs)) {
    info.aborted = true;
    info.diagnostic = "non-positive curvature along the search direction";
    return info;
  }
  const Eigen::VectorXd full_step = std::sqrt(2.0 * config.kl_bound / shs) * x;

  const Eigen::VectorXd theta_old = policy.actor_flat();
  const double base = (ratio * batch.advantages.array()).mean();
  PolicyParams candidate = policy;
  double frac = 1.0;
  for (int k = 0; k <= config.max_backtracks; ++k, frac *= config.backtrack_ratio) {
    candidate.set_actor_flat(theta_old + frac * full_step);
    const Eigen::VectorXd mean_new = candidate.actor.forward(batch.obs).row(0).transpose();
    const double kl = mean_kl_from(mean_old, log_std, mean_new, candidate.log_std);
    const Eigen::VectorXd lp = gaussian_logprob(batch.actions, mean_new, candidate.log_std);
    const double surr = ((lp - batch.logprobs).array().exp() * batch.advantages.array()).mean();
    const double improvement = surr - base;
    if (std::isfinite(kl) && std::isfinite(improvement) && improvement >= 0.0 &&
        kl <= config.kl_bound) {
      policy = candidate;
      info.accepted = true;
      info.kl = kl;
      info.improvement = improvement;
      info.backtracks = k;
      return info;
    }
  }
  info.backtracks = config.max_backtracks;
  info.diagnostic = "line search found no acceptable step";
  return info;
}

CriticFitInfo fit_critic(const RolloutBatch& batch, PolicyParams& critic, int epochs, double lr,
                         int minibatch, std::uint64_t seed) {
  CriticFitInfo info;
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (epochs <= 0 || n == 0) return info;

  // Targets are standardised with this batch's statistics. Returns swing by
  // orders of magnitude between iterations, so old predictions are not
  // carried over; the network keeps its shape and relearns in the new units.
  const double mu = batch.returns.mean();
  const double sd = std::sqrt((batch.returns.array() - mu).square().mean());
  const double new_scale = std::max(sd, 1e-3 * std::max(1.0, std::abs(mu)));
  critic.value_shift = mu;
  critic.value_scale = new_scale;

  const Eigen::RowVectorXd target = ((batch.returns.array() - mu) / new_scale).matrix().transpose();
  auto loss = [&](const Mlp& net) {
    return (net.forward(batch.obs) - target).squaredNorm() / static_cast<double>(n);
  };

  Eigen::VectorXd theta = critic.critic.flat();
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(theta.size());
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  long t = 0;
  Rng rng = make_rng(seed, {0xc217});
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  double prev = loss(critic.critic);
  double step = lr;

  for (int e = 0; e < epochs; ++e) {
    const Eigen::VectorXd theta_start = theta, m1_start = m1, m2_start = m2;
    const long t_start = t;
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += minibatch) {
      const Eigen::Index len = std::min<Eigen::Index>(minibatch, n - start);
      Eigen::MatrixXd x(batch.obs.rows(), len);
      Eigen::RowVectorXd y(len);
      for (Eigen::Index k = 0; k < len; ++k) {
        const Eigen::Index idx = order[static_cast<std::size_t>(start + k)];
        x.col(k) = batch.obs.col(idx);
        y[k] = target[idx];
      }
      Mlp::Tape tape;
      const Eigen::MatrixXd pred = critic.critic.forward(x, tape);
      const Eigen::VectorXd grad =
          critic.critic.backward(tape, 2.0 * (pred - y) / static_cast<double>(len));
      ++t;
      m1 = kBeta1 * m1 + (1.0 - kBeta1) * grad;
      m2 = kBeta2 * m2 + (1.0 - kBeta2) * grad.cwiseProduct(grad);
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
      theta -= step * ((m1 / c1).array() / ((m2 / c2).array().sqrt() + kEps)).matrix();
      critic.critic.set_flat(theta);
    }
    const double now = loss(critic.critic);
    if (!(now <= prev)) {
      // Keep the contract that the loss never rises: undo and slow down.
      theta = theta_start;
      m1 = m1_start;
      m2 = m2_start;
      t = t_start;
      critic.critic.set_flat(theta);
      step *= 0.5;
      info.epoch_losses.push_back(prev);
      continue;
    }
    prev = now;
    info.epoch_losses.push_back(now);
  }
  return info;
}

TrainResult train(const TrainConfig& config, const ProgressFn& progress) {
  validate(config);
  auto env = std::make_shared<const EnvConfig>(config.env);
  const Scenario probe = build_scenario(config.env.scenario);
  const int obs_size = observation_size(static_cast<int>(probe.plan.phases.size()));

  TrainResult result;
  result.policy = make_policy(obs_size, config.seed, config.hidden, config.initial_std);
  for (int it = 0; it < config.iterations; ++it) {
    const std::uint64_t it_seed = derive_seed(config.seed, {static_cast<std::uint64_t>(it), 7});
    RolloutBatch batch = collect_rollouts(result.policy, env, config.batch_steps, it_seed);
    estimate_advantages(batch, result.policy, config.gamma, config.normalize_advantages);
    const UpdateInfo upd = policy_update(batch, result.policy, config);
    if (upd.accepted && upd.kl > config.kl_bound) {
      throw ValidationError(fmt::format("accepted update exceeds the KL bound: {}", upd.kl));
    }
    fit_critic(batch, result.policy, config.critic_epochs, config.critic_lr,
               config.critic_minibatch, it_seed);

    LearningRecord rec;
    rec.iteration = it;
    rec.mean_return = batch.mean_segment_return;
    rec.mean_fuel_l = batch.mean_fuel_l;
    rec.mean_speed_mps = batch.mean_speed_mps;
    rec.kl = upd.kl;
    rec.accepted = upd.accepted;
    rec.tuples = static_cast<int>(batch.size());
    if (config.eval_every > 0 &&
        ((it + 1) % config.eval_every == 0 || it + 1 == config.iterations)) {
      EpisodeOptions opt;
      opt.policy = &result.policy;
      opt.mode = ActionMode::kMean;
      const MetricsReport m =
          run_scenario(env, config.env.scenario.seed, config.eval_replicates, opt).report;
      rec.evaluated = true;
      rec.eval_fuel_l = m.fuel_l;
      rec.eval_speed_mps = m.speed_mps;
    }
    result.curve.push_back(rec);
    if (progress) progress(rec);
  }
  return result;
}

std::string learning_curve_csv(const std::vector<LearningRecord>& curve) {
  std::string out = "iteration,return,fuel,speed,kl,accepted,tuples,eval_fuel,eval_speed\n";
  for (const auto& r : curve) {
    fmt::format_to(std::back_inserter(out), "{},{},{},{},{},{},{},{},{}\n", r.iteration,
                   r.mean_return, r.mean_fuel_l, r.mean_speed_mps, r.kl, r.accepted ? 1 : 0,
                   r.tuples, r.evaluated ? fmt::format("{}", r.eval_fuel_l) : "",
                   r.evaluated ? fmt::format("{}", r.eval_speed_mps) : "");
  }
  return out;
}

}  // namespace ecodrive
