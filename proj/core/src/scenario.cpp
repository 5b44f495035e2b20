#include "ecodrive/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ecodrive/errors.hpp"
#include "ecodrive/rng.hpp"

namespace ecodrive {

const char* to_string(Direction d) {
  switch (d) {
    case Direction::kNorth: return "N";
    case Direction::kSouth: return "S";
    case Direction::kEast: return "E";
    case Direction::kWest: return "W";
  }
  return "?";
}

double SignalPlan::cycle_s() const {
  double c = 0.0;
  for (const auto& p : phases) c += p.green_s + p.yellow_s;
  return c;
}

int SignalPlan::phase_of(int approach) const {
  for (std::size_t k = 0; k < phases.size(); ++k) {
    const auto& served = phases[k].served_approaches;
    if (std::find(served.begin(), served.end(), approach) != served.end()) {
      return static_cast<int>(k);
    }
  }
  throw LookupError("approach " + std::to_string(approach) + " is not served by any phase");
}

double SignalPlan::phase_start(int k) const {
  double s = 0.0;
  for (int i = 0; i < k; ++i) s += phases.at(i).green_s + phases.at(i).yellow_s;
  return s;
}

std::size_t ArrivalSchedule::size() const {
  std::size_t n = 0;
  for (const auto& a : per_approach) n += a.size();
  return n;
}

void validate(const ScenarioConfig& c) {
  auto positive = [](const char* field, double v) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw ConfigError(std::string("scenario.") + field, "must be > 0");
  };
  positive("approach_length_m", c.approach_length_m);
  positive("outbound_length_m", c.outbound_length_m);
  if (!(c.intersection_length_m >= 0.0)) {
    throw ConfigError("scenario.intersection_length_m", "must be >= 0");
  }
  positive("speed_limit_mps", c.speed_limit_mps);
  if (!(c.entry_speed_mps >= 0.0) || c.entry_speed_mps > c.speed_limit_mps) {
    throw ConfigError("scenario.entry_speed_mps", "must lie in [0, speed_limit_mps]");
  }
  positive("vehicle_length_m", c.vehicle_length_m);
  if (!(c.inflow_veh_per_hr >= 0.0) || !std::isfinite(c.inflow_veh_per_hr)) {
    throw ConfigError("scenario.inflow_veh_per_hr", "must be >= 0");
  }
  if (!(c.penetration_pct >= 0.0 && c.penetration_pct <= 100.0)) {
    throw ConfigError("scenario.penetration_pct", "must lie in [0, 100]");
  }
  if (!is_human(c.human_model)) throw ConfigError("scenario.human_model", "must be an IDM variant");
  if (!is_cav(c.cav_controller)) {
    throw ConfigError("scenario.cav_controller", "must be EcoGlide or Policy");
  }
  positive("green_s", c.green_s);
  if (!(c.yellow_s >= 0.0)) throw ConfigError("scenario.yellow_s", "must be >= 0");
  if (!std::isfinite(c.signal_offset_s))
    throw ConfigError("scenario.signal_offset_s", "must be finite");
  positive("dt_s", c.dt_s);
  if (c.horizon_steps <= 0) throw ConfigError("scenario.horizon_steps", "must be > 0");
  if (c.warmup_steps < 0 || c.warmup_steps >= c.horizon_steps) {
    throw ConfigError("scenario.warmup_steps", "must lie in [0, horizon_steps)");
  }
}

namespace {

SignalPlan default_plan(const ScenarioConfig& c) {
  SignalPlan plan;
  plan.phases.push_back({{static_cast<int>(Direction::kNorth), static_cast<int>(Direction::kSouth)},
                         c.green_s,
                         c.yellow_s});
  plan.phases.push_back({{static_cast<int>(Direction::kEast), static_cast<int>(Direction::kWest)},
                         c.green_s,
                         c.yellow_s});
  plan.offset_s = c.signal_offset_s;
  return plan;
}

// Position of t inside the cycle, in [0, cycle).
double cycle_position(const SignalPlan& plan, double t) {
  const double cycle = plan.cycle_s();
  double tc = std::fmod(t - plan.offset_s, cycle);
  if (tc < 0.0) tc += cycle;
  return tc;
}

}  // namespace

Scenario build_scenario(const ScenarioConfig& config) {
  validate(config);
  Scenario s;
  s.config = config;
  for (int i = 0; i < kNumApproaches; ++i) {
    auto& a = s.network.approaches[i];
    a.direction = static_cast<Direction>(i);
    a.length_m = config.approach_length_m;
    a.outbound_length_m = config.outbound_length_m;
    a.speed_limit_mps = config.speed_limit_mps;
    a.stop_line_pos = config.approach_length_m;
  }
  s.network.intersection_length_m = config.intersection_length_m;
  s.plan = default_plan(config);

  const double rate = config.per_approach_inflow();
  if (rate > 0.0) {
    const double headway = 3600.0 / rate;
    const double end = config.horizon_s();
    for (auto& lane : s.arrivals.per_approach) {
      for (long k = 0;; ++k) {
        const double t = static_cast<double>(k) * headway;
        if (t >= end) break;
        lane.push_back({t, config.entry_speed_mps, config.human_model});
      }
    }
  }
  s.arrivals = assign_controllers(std::move(s.arrivals), config.penetration_pct, config.human_model,
                                  config.seed, config.cav_controller);
  return s;
}

PhaseState signal_state(const SignalPlan& plan, double t) {
  const double cycle = plan.cycle_s();
  const double tc = cycle_position(plan, t);
  PhaseState st;
  for (std::size_t k = 0; k < plan.phases.size(); ++k) {
    const double start = plan.phase_start(static_cast<int>(k));
    const auto& ph = plan.phases[k];
    if (tc >= start && tc < start + ph.green_s + ph.yellow_s) {
      st.active_phase_index = static_cast<int>(k);
    }
  }
  for (int a = 0; a < kNumApproaches; ++a) {
    const int k = plan.phase_of(a);
    const double start = plan.phase_start(k);
    const auto& ph = plan.phases[k];
    const double into = tc - start;
    if (into >= 0.0 && into < ph.green_s) {
      st.indication[a] = Indication::kGreen;
      st.time_to_green[a] = 0.0;
      continue;
    }
    st.indication[a] = (into >= ph.green_s && into < ph.green_s + ph.yellow_s) ? Indication::kYellow
                                                                               : Indication::kRed;
    double ttg = std::fmod(start - tc, cycle);
    if (ttg < 0.0) ttg += cycle;
    st.time_to_green[a] = ttg;
  }
  return st;
}

GreenWindow green_window(const SignalPlan& plan, int approach, double t) {
  const int k = plan.phase_of(approach);
  const double green = plan.phases[k].green_s;
  const PhaseState st = signal_state(plan, t);
  if (st.indication[approach] == Indication::kGreen) {
    const double into = cycle_position(plan, t) - plan.phase_start(k);
    return {t - into, t - into + green};
  }
  const double start = t + st.time_to_green[approach];
  return {start, start + green};
}

ArrivalSchedule assign_controllers(ArrivalSchedule schedule, double penetration_pct,
                                   ControllerKind human_model, std::uint64_t seed,
                                   ControllerKind cav_kind) {
  const double p = std::clamp(penetration_pct, 0.0, 100.0) / 100.0;
  Rng rng = make_rng(seed, {0xA551'6E00ULL});
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Largest-remainder split of the exact total across approaches; ties go to
  // a seeded random order.
  const auto total_n = static_cast<double>(schedule.size());
  const long target = std::lround(total_n * p);
  std::array<long, kNumApproaches> quota{};
  std::array<double, kNumApproaches> remainder{};
  long assigned = 0;
  for (int a = 0; a < kNumApproaches; ++a) {
    const double share = static_cast<double>(schedule.per_approach[a].size()) * p;
    quota[a] = static_cast<long>(std::floor(share));
    remainder[a] = share - static_cast<double>(quota[a]);
    assigned += quota[a];
  }
  std::array<int, kNumApproaches> order{};
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](int l, int r) { return remainder[l] > remainder[r]; });
  for (int i = 0; assigned < target && i < kNumApproaches; ++i) {
    const int a = order[i];
    if (quota[a] < static_cast<long>(schedule.per_approach[a].size())) {
      ++quota[a];
      ++assigned;
    }
  }

  // Spread each approach's quota evenly: arrival j is a CAV when the running
  // count floor((j+1)*q/n + phase) steps up.
  for (int a = 0; a < kNumApproaches; ++a) {
    auto& lane = schedule.per_approach[a];
    const auto n = static_cast<double>(lane.size());
    const double phase = unit(rng);
    const auto q = static_cast<double>(quota[a]);
    for (std::size_t j = 0; j < lane.size(); ++j) {
      const double before = std::floor(static_cast<double>(j) * q / n + phase);
      const double after = std::floor(static_cast<double>(j + 1) * q / n + phase);
      lane[j].kind = after > before ? cav_kind : human_model;
    }
  }
  return schedule;
}

}  // namespace ecodrive
