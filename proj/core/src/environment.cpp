#include "ecodrive/environment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ecodrive/errors.hpp"

namespace ecodrive {

void validate(const EnvConfig& c) {
  validate(c.scenario);
  validate(c.idm);
  validate(c.energy.fuel);
  if (!(c.limits.a_min < 0.0)) throw ConfigError("limits.a_min", "must be < 0");
  if (!(c.limits.a_max > 0.0)) throw ConfigError("limits.a_max", "must be > 0");
  if (!(c.limits.h_min > 0.0)) throw ConfigError("limits.h_min", "must be > 0");
  if (!(c.limits.stop_speed > 0.0)) throw ConfigError("limits.stop_speed", "must be > 0");
  if (!(c.comms.r_v2v > 0.0)) throw ConfigError("comms.r_v2v", "must be > 0");
  if (!(c.comms.r_i2v > 0.0)) throw ConfigError("comms.r_i2v", "must be > 0");
  if (!(c.reward.delta > 0.0)) throw ConfigError("reward.delta", "must be > 0");
  if (!(c.human.noise_halfwidth >= 0.0)) throw ConfigError("human.noise_halfwidth", "must be >= 0");
  if (!(c.human.param_rel_std >= 0.0)) throw ConfigError("human.param_rel_std", "must be >= 0");
  if (!(c.start_zone_m >= 0.0)) throw ConfigError("env.start_zone_m", "must be >= 0");
  if (!(c.min_entry_gap_m >= 0.0)) throw ConfigError("env.min_entry_gap_m", "must be >= 0");
  if (!(c.glide.v_min_glide > 0.0)) throw ConfigError("glide.v_min_glide", "must be > 0");
}

namespace {

Limits effective_limits(const EnvConfig& c) {
  Limits lim = c.limits;
  lim.v_max = c.scenario.speed_limit_mps;
  return lim;
}

}  // namespace

World::World(std::shared_ptr<const EnvConfig> config, Scenario scenario, std::uint64_t seed)
    : config_(std::move(config)), scenario_(std::move(scenario)), seed_(seed) {
  validate(*config_);
}

std::size_t World::num_vehicles() const {
  std::size_t n = 0;
  for (const auto& l : lanes_) n += l.size();
  return n;
}

const VehicleState* World::find(std::uint64_t id) const {
  for (const auto& l : lanes_) {
    for (const auto& v : l) {
      if (v.state.id == id) return &v.state;
    }
  }
  return nullptr;
}

std::vector<std::uint64_t> World::cav_ids() const {
  std::vector<std::uint64_t> ids;
  for (const auto& l : lanes_) {
    for (const auto& v : l) {
      if (v.state.kind == ControllerKind::kPolicy) ids.push_back(v.state.id);
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::size_t World::pending_arrivals() const {
  std::size_t n = 0;
  for (int a = 0; a < kNumApproaches; ++a) {
    n += scenario_.arrivals.per_approach[a].size() - next_arrival_[a];
  }
  return n;
}

std::uint64_t World::spawn(int approach, double pos, double vel, ControllerKind kind) {
  auto& lane = lanes_.at(approach);
  const double len = scenario_.config.vehicle_length_m;
  for (const auto& v : lane) {
    if (std::abs(v.state.pos - pos) < len) {
      throw ValidationError("spawned vehicle overlaps vehicle " + std::to_string(v.state.id));
    }
  }
  Vehicle veh{VehicleState{}, config_->idm, make_rng(seed_, {0x5ba3, next_id_}), std::nullopt};
  HumanDriverModel human = config_->human;
  human.kind = kind;
  Rng param_rng = make_rng(seed_, {0x5ba4, next_id_});
  veh.idm = sample_idm_params(human, config_->idm, param_rng);
  VehicleState& s = veh.state;
  s.id = next_id_++;
  s.approach = approach;
  s.pos = pos;
  s.vel = vel;
  s.length_m = len;
  s.kind = kind;
  s.scheduled_entry_time = time();
  s.entry_time = time();
  s.stopped_flag = vel < config_->limits.stop_speed;
  const std::uint64_t id = s.id;
  auto it =
      std::find_if(lane.begin(), lane.end(), [&](const Vehicle& v) { return v.state.pos < pos; });
  lane.insert(it, std::move(veh));
  return id;
}

World reset(std::shared_ptr<const EnvConfig> config, const Scenario& scenario, std::uint64_t seed) {
  return World(std::move(config), scenario, seed);
}

World reset(std::shared_ptr<const EnvConfig> config, std::uint64_t seed) {
  Scenario scenario = build_scenario(config->scenario);
  return World(std::move(config), std::move(scenario), seed);
}

// ---------------------------------------------------------------------------
// Observation

namespace {

struct Located {
  int approach = 0;
  std::size_t index = 0;
};

std::optional<Located> locate(const World& world, std::uint64_t id) {
  for (int a = 0; a < kNumApproaches; ++a) {
    const auto& lane = world.lane(a);
    for (std::size_t i = 0; i < lane.size(); ++i) {
      if (lane[i].state.id == id) return Located{a, i};
    }
  }
  return std::nullopt;
}

double unit(double x) { return std::clamp(x, 0.0, 1.0); }

void fill_observation(const World& world, const Located& at, double* out) {
  const EnvConfig& cfg = world.config();
  const Scenario& sc = world.scenario();
  const auto& lane = world.lane(at.approach);
  const VehicleState& ego = lane[at.index].state;
  const double v_max = cfg.scenario.speed_limit_mps;
  const double r = cfg.comms.r_v2v;
  const int phases = static_cast<int>(sc.plan.phases.size());

  int i = 0;
  out[i++] = unit(ego.vel / v_max);
  out[i++] = unit(ego.pos / sc.network.route_length(at.approach));
  const int own_phase = sc.plan.phase_of(at.approach);
  for (int k = 0; k < phases; ++k) out[i++] = k == own_phase ? 1.0 : 0.0;

  double v_lead = 1.0, p_lead = 1.0, v_follow = 1.0, p_follow = 1.0;
  if (at.index > 0) {
    const VehicleState& l = lane[at.index - 1].state;
    const double dist = l.pos - ego.pos;
    if (dist < r) {
      v_lead = unit(l.vel / v_max);
      p_lead = unit(dist / r);
    }
  }
  if (at.index + 1 < lane.size()) {
    const VehicleState& f = lane[at.index + 1].state;
    const double dist = ego.pos - f.pos;
    if (dist < r) {
      v_follow = unit(f.vel / v_max);
      p_follow = unit(dist / r);
    }
  }
  out[i++] = v_lead;
  out[i++] = p_lead;
  out[i++] = v_follow;
  out[i++] = p_follow;

  double tl_time = 1.0;
  const double to_line = sc.network.approaches[at.approach].stop_line_pos - ego.pos;
  if (to_line > 0.0 && to_line < cfg.comms.r_i2v) {
    const PhaseState st = signal_state(sc.plan, world.time());
    tl_time = unit(st.time_to_green[at.approach] / sc.plan.cycle_s());
  }
  out[i++] = tl_time;
}

}  // namespace

Observation observe(const World& world, std::uint64_t cav_id) {
  const auto at = locate(world, cav_id);
  if (!at) throw LookupError("no vehicle with id " + std::to_string(cav_id));
  if (world.lane(at->approach)[at->index].state.kind != ControllerKind::kPolicy) {
    throw LookupError("vehicle " + std::to_string(cav_id) + " is not policy-controlled");
  }
  const int phases = static_cast<int>(world.scenario().plan.phases.size());
  Eigen::VectorXd buf(observation_size(phases));
  fill_observation(world, *at, buf.data());
  Observation o;
  int i = 0;
  o.v_cav = buf[i++];
  o.p_cav = buf[i++];
  o.tl_phase.assign(buf.data() + i, buf.data() + i + phases);
  i += phases;
  o.v_lead = buf[i++];
  o.p_lead = buf[i++];
  o.v_follow = buf[i++];
  o.p_follow = buf[i++];
  o.tl_time = buf[i++];
  return o;
}

CavObservations observe_all(const World& world) {
  CavObservations out;
  std::vector<Located> where;
  for (int a = 0; a < kNumApproaches; ++a) {
    const auto& lane = world.lane(a);
    for (std::size_t i = 0; i < lane.size(); ++i) {
      if (lane[i].state.kind == ControllerKind::kPolicy) {
        out.ids.push_back(lane[i].state.id);
        where.push_back({a, i});
      }
    }
  }
  std::vector<std::size_t> order(out.ids.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(),
            [&](std::size_t l, std::size_t r) { return out.ids[l] < out.ids[r]; });
  const int phases = static_cast<int>(world.scenario().plan.phases.size());
  out.matrix.resize(observation_size(phases), static_cast<Eigen::Index>(order.size()));
  std::vector<std::uint64_t> sorted_ids(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    sorted_ids[k] = out.ids[order[k]];
    fill_observation(world, where[order[k]], out.matrix.col(static_cast<Eigen::Index>(k)).data());
  }
  out.ids = std::move(sorted_ids);
  return out;
}

// ---------------------------------------------------------------------------
// Reward

namespace {

double normalised_step_fuel(const VehicleState& v, const EnvConfig& cfg) {
  const auto& fp = cfg.energy.fuel;
  const double f_max = fuel_rate(cfg.scenario.speed_limit_mps, cfg.limits.a_max, fp);
  const double f = fuel_rate(v.vel, v.accel, fp);
  // Both rates are multiplied by dt before normalising; dt cancels.
  return unit((f - fp.alpha0) / (f_max - fp.alpha0));
}

}  // namespace

PhaseGroupStats phase_stats(const World& world, int phase_index) {
  const auto& plan = world.scenario().plan;
  if (phase_index < 0 || phase_index >= static_cast<int>(plan.phases.size())) {
    throw LookupError("no phase " + std::to_string(phase_index));
  }
  const EnvConfig& cfg = world.config();
  PhaseGroupStats s;
  double fuel = 0.0, speed = 0.0;
  int stopped = 0;
  for (int a : plan.phases[phase_index].served_approaches) {
    for (const auto& veh : world.lane(a)) {
      const VehicleState& v = veh.state;
      ++s.size;
      fuel += normalised_step_fuel(v, cfg);
      speed += unit(v.vel / cfg.scenario.speed_limit_mps);
      if (v.stopped_flag) {
        ++stopped;
        if (v.pos < cfg.start_zone_m) s.approach_start_stop = true;
      }
    }
  }
  if (s.size > 0) {
    s.fuel = fuel / s.size;
    s.speed = speed / s.size;
    s.stopped = static_cast<double>(stopped) / s.size;
  }
  return s;
}

int reward_branch(const PhaseGroupStats& s, const RewardCoeffs& c) {
  if (s.approach_start_stop) return 1;
  if (s.fuel <= c.delta) return s.stopped == 0.0 ? 2 : 3;
  return 4;
}

double reward(const PhaseGroupStats& s, const RewardCoeffs& c) {
  auto ex = [&](double x) { return std::exp(std::min(x, c.exp_clamp)); };
  switch (reward_branch(s, c)) {
    case 1: return c.mu1;
    case 2: return c.mu2 + c.mu3 * ex(s.speed);
    case 3: return c.mu4 + c.mu5 * ex(s.speed) + c.mu6 * s.stopped;
    default: return c.mu7 + c.mu8 * ex(c.mu9 * s.fuel) + c.mu10 * ex(s.speed) + c.mu11 * s.stopped;
  }
}

// ---------------------------------------------------------------------------
// Stepping

namespace {

bool entrance_free(const std::vector<World::Vehicle>& lane, double entry_speed,
                   const EnvConfig& cfg, const Limits& lim, double dt) {
  if (lane.empty()) return true;
  const VehicleState& last = lane.back().state;
  const double gap = last.pos - last.length_m;
  if (gap < cfg.min_entry_gap_m) return false;
  const double decel = -lim.a_min;
  return gap + braking_distance(last.vel, decel, dt) >=
         lim.h_min + braking_distance(entry_speed, decel, dt);
}

}  // namespace

StepResult step(World& world, const std::map<std::uint64_t, double>& actions) {
  if (world.done()) throw ValidationError("step() called on a finished episode");
  const EnvConfig& cfg = *world.config_;
  const Scenario& sc = world.scenario_;
  const double dt = sc.config.dt_s;
  const double t = world.time();
  const Limits lim = effective_limits(cfg);
  const bool warmup = world.in_warmup();
  const PhaseState phase = signal_state(sc.plan, t);

  for (const auto& [id, a] : actions) {
    if (!std::isfinite(a)) {
      throw ValidationError("non-finite action for vehicle " + std::to_string(id));
    }
  }

  // Accelerations from the current snapshot.
  std::array<std::vector<double>, kNumApproaches> accel;
  std::array<std::vector<std::optional<double>>, kNumApproaches> plans;
  std::vector<std::uint64_t> acted;
  for (int a = 0; a < kNumApproaches; ++a) {
    auto& lane = world.lanes_[a];
    const double stop_line = sc.network.approaches[a].stop_line_pos;
    accel[a].resize(lane.size());
    plans[a].resize(lane.size());
    for (std::size_t i = 0; i < lane.size(); ++i) {
      auto& veh = lane[i];
      const VehicleState& ego = veh.state;
      std::optional<LeaderView> real;
      if (i > 0) real = leader_view(lane[i - 1].state);
      const auto light = red_light_leader(ego, phase.indication[a], stop_line, veh.idm.b, lim, dt);
      const auto effective = nearer_leader(ego, real, light);

      double cmd = 0.0;
      switch (ego.kind) {
        case ControllerKind::kVanillaIdm:
        case ControllerKind::kNoisyIdm:
        case ControllerKind::kMixedIdm:
          cmd = control_human(ego.kind, ego, effective, veh.idm, cfg.human.noise_halfwidth,
                              veh.noise);
          break;
        case ControllerKind::kEcoGlide: {
          GlideContext ctx;
          ctx.plan = &sc.plan;
          ctx.approach = a;
          ctx.now = t;
          ctx.stop_line = stop_line;
          ctx.leader = real;
          if (i > 0) ctx.leader_planned_arrival = lane[i - 1].planned_arrival;
          const GlideCommand g = control_eco_glide(ego, ctx, veh.idm, lim, cfg.glide);
          cmd = g.accel;
          plans[a][i] = g.planned_arrival;
          break;
        }
        case ControllerKind::kPolicy:
          if (warmup) {
            cmd = idm_accel(ego, effective, veh.idm);
          } else {
            const auto it = actions.find(ego.id);
            if (it == actions.end()) {
              throw ValidationError("missing action for vehicle " + std::to_string(ego.id));
            }
            cmd = it->second;
            acted.push_back(ego.id);
          }
          break;
      }
      cmd = safety_guard(ego, real, cmd, dt, lim);
      cmd = safety_guard(ego, light, cmd, dt, lim);
      accel[a][i] = cmd;
    }
  }

  // Integrate, account energy, then process exits and entries.
  const double t_next = t + dt;
  StepResult result;
  for (int a = 0; a < kNumApproaches; ++a) {
    auto& lane = world.lanes_[a];
    const double stop_line = sc.network.approaches[a].stop_line_pos;
    const double route = sc.network.route_length(a);
    std::vector<World::Vehicle> kept;
    kept.reserve(lane.size() + 1);
    for (std::size_t i = 0; i < lane.size(); ++i) {
      auto& veh = lane[i];
      const double before = veh.state.pos;
      veh.state = step_vehicle(veh.state, accel[a][i], dt, lim);
      veh.state = accumulate(veh.state, dt, cfg.energy);
      veh.planned_arrival = plans[a][i];
      if (before < stop_line && veh.state.pos >= stop_line) {
        world.crossings_.push_back({t_next, veh.state.id, a});
      }
      if (cfg.record_trajectories) {
        world.trajectory_.push_back({t_next, veh.state.id, a, veh.state.pos, veh.state.vel,
                                     veh.state.accel,
                                     fuel_rate(veh.state.vel, veh.state.accel, cfg.energy.fuel),
                                     co2_rate(veh.state.vel, veh.state.accel, cfg.energy.co2)});
      }
      if (veh.state.pos >= route) {
        veh.state.exit_time = t_next;
        if (veh.state.kind == ControllerKind::kPolicy) result.exited.push_back(veh.state.id);
        world.finished_.push_back(veh.state);
      } else {
        kept.push_back(std::move(veh));
      }
    }
    lane = std::move(kept);

    const auto& arrivals = sc.arrivals.per_approach[a];
    auto& next = world.next_arrival_[a];
    if (next < arrivals.size() && arrivals[next].entry_time_s <= t_next + 1e-9 &&
        entrance_free(lane, arrivals[next].entry_speed_mps, cfg, lim, dt)) {
      const Arrival& arr = arrivals[next];
      World::Vehicle veh{VehicleState{}, cfg.idm,
                         make_rng(world.seed_, {static_cast<std::uint64_t>(a), next, 2}),
                         std::nullopt};
      HumanDriverModel human = cfg.human;
      human.kind = arr.kind;
      Rng param_rng = make_rng(world.seed_, {static_cast<std::uint64_t>(a), next, 1});
      veh.idm = sample_idm_params(human, cfg.idm, param_rng);
      VehicleState& s = veh.state;
      s.id = world.next_id_++;
      s.approach = a;
      s.pos = 0.0;
      s.vel = arr.entry_speed_mps;
      s.length_m = sc.config.vehicle_length_m;
      s.kind = arr.kind;
      s.scheduled_entry_time = arr.entry_time_s;
      s.entry_time = t_next;
      s.stopped_flag = s.vel < lim.stop_speed;
      lane.push_back(std::move(veh));
      ++next;
    }
  }

  ++world.step_;
  const int phases = static_cast<int>(sc.plan.phases.size());
  result.stats.resize(phases);
  result.phase_rewards.resize(phases);
  for (int k = 0; k < phases; ++k) {
    result.stats[k] = phase_stats(world, k);
    result.phase_rewards[k] = reward(result.stats[k], cfg.reward);
  }
  result.recorded = !warmup;
  if (result.recorded) {
    for (std::uint64_t id : acted) {
      // The vehicle may have exited; its approach is fixed, so look it up in
      // the pre-step arrangement via the finished list if needed.
      int approach = -1;
      if (const VehicleState* v = world.find(id)) {
        approach = v->approach;
      } else {
        for (auto it = world.finished_.rbegin(); it != world.finished_.rend(); ++it) {
          if (it->id == id) {
            approach = it->approach;
            break;
          }
        }
      }
      const double r = result.phase_rewards[sc.plan.phase_of(approach)];
      result.rewards[id] = r;
      world.recorded_reward_ += r;
    }
  }
  result.observations = observe_all(world);
  result.done = world.done();
  return result;
}

}  // namespace ecodrive
