#include "ecodrive/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ecodrive/errors.hpp"

namespace ecodrive {

void validate(const IdmParams& p) {
  auto positive = [](const char* field, double v) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw ConfigError(std::string("idm.") + field, "must be > 0");
  };
  positive("v0", p.v0);
  positive("T", p.T);
  positive("h0", p.h0);
  positive("c", p.c);
  positive("b", p.b);
  positive("delta", p.delta);
}

IdmParams sample_idm_params(const HumanDriverModel& model, const IdmParams& base, Rng& rng) {
  if (model.kind != ControllerKind::kMixedIdm) return base;
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](double mean) {
    double z = normal(rng);
    while (std::abs(z) > model.param_truncation) z = normal(rng);
    return std::max(mean * (1.0 + model.param_rel_std * z), 1e-3 * mean);
  };
  IdmParams p = base;
  p.v0 = draw(base.v0);
  p.T = draw(base.T);
  p.h0 = draw(base.h0);
  p.c = draw(base.c);
  p.b = draw(base.b);
  return p;
}

double idm_accel(double vel, std::optional<double> gap, double leader_vel, const IdmParams& p) {
  const double free_term = std::pow(vel / p.v0, p.delta);
  if (!gap) return p.c * (1.0 - free_term);
  if (!(*gap > 0.0)) {
    throw SafetyViolation("non-positive gap " + std::to_string(*gap) + " m in car following");
  }
  const double dv = vel - leader_vel;
  const double desired = p.h0 + std::max(0.0, vel * p.T + vel * dv / (2.0 * std::sqrt(p.c * p.b)));
  const double ratio = desired / *gap;
  return p.c * (1.0 - free_term - ratio * ratio);
}

double idm_accel(const VehicleState& ego, const std::optional<LeaderView>& leader,
                 const IdmParams& p) {
  if (!leader) return idm_accel(ego.vel, std::nullopt, 0.0, p);
  return idm_accel(ego.vel, gap_to(ego, *leader), leader->vel, p);
}

std::optional<LeaderView> red_light_leader(const VehicleState& ego, Indication indication,
                                           double stop_line, double comfortable_decel,
                                           const Limits& limits, double dt) {
  if (indication == Indication::kGreen) return std::nullopt;
  const double d = stop_line - ego.pos;
  if (!(d > 0.0)) return std::nullopt;
  const bool must_stop = indication == Indication::kYellow
                             ? ego.vel * ego.vel / (2.0 * comfortable_decel) <= d
                             : braking_distance(ego.vel, -limits.a_min, dt) <= d;
  if (!must_stop) return std::nullopt;
  return LeaderView{stop_line, 0.0, 0.0};
}

std::optional<LeaderView> nearer_leader(const VehicleState& ego, const std::optional<LeaderView>& a,
                                        const std::optional<LeaderView>& b) {
  if (!a) return b;
  if (!b) return a;
  return gap_to(ego, *a) <= gap_to(ego, *b) ? a : b;
}

double step_distance(double v, double a, double dt) {
  const double v_next = std::max(0.0, v + a * dt);
  return 0.5 * (v + v_next) * dt;
}

double braking_distance(double v, double decel, double dt) {
  if (v <= 0.0) return 0.0;
  const double dv = decel * dt;
  const double n = std::floor(v / dv);
  const double rest = v - n * dv;
  return n * v * dt - 0.5 * n * n * dv * dt + 0.5 * rest * dt;
}

VehicleState step_vehicle(const VehicleState& state, double a_cmd, double dt,
                          const Limits& limits) {
  VehicleState next = state;
  double a = std::clamp(a_cmd, limits.a_min, limits.a_max);
  a = std::min(a, (limits.v_max - state.vel) / dt);
  const double v_next = std::max(0.0, state.vel + a * dt);
  next.pos = state.pos + 0.5 * (state.vel + v_next) * dt;
  next.vel = v_next;
  next.accel = a;
  const bool stopped = v_next < limits.stop_speed;
  if (stopped && !state.stopped_flag) ++next.stop_count;
  next.stopped_flag = stopped;
  return next;
}

namespace {

bool guard_ok(double gap, double v, double vl, double a, double dt, const Limits& lim) {
  const double decel = -lim.a_min;
  const double v_next = std::max(0.0, v + a * dt);
  return gap + braking_distance(vl, decel, dt) >=
         lim.h_min + step_distance(v, a, dt) + braking_distance(v_next, decel, dt);
}

}  // namespace

double safety_guard(const VehicleState& ego, const std::optional<LeaderView>& leader, double a_cmd,
                    double dt, const Limits& limits) {
  if (!leader || a_cmd <= limits.a_min) return a_cmd;
  const double gap = gap_to(ego, *leader);
  const double v = ego.vel;
  const double vl = leader->vel;
  const double a_try = std::min(a_cmd, limits.a_max);
  if (guard_ok(gap, v, vl, a_try, dt, limits)) return a_cmd;
  if (!guard_ok(gap, v, vl, limits.a_min, dt, limits)) return limits.a_min;
  double lo = limits.a_min;  // feasible
  double hi = a_try;         // infeasible
  for (int i = 0; i < 60 && hi - lo > 1e-12; ++i) {
    const double mid = 0.5 * (lo + hi);
    (guard_ok(gap, v, vl, mid, dt, limits) ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace ecodrive
