#include "ecodrive/dynamics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ecodrive/errors.hpp"

namespace ecodrive {
namespace {

// IDM written out from its definition, for comparison.
double oracle_idm(double v, double gap, double dv) {
  const double v0 = 30, T = 1, h0 = 1.5, c = 1, b = 1.5;
  const double h_star = h0 + std::max(0.0, v * T + v * dv / (2 * std::sqrt(c * b)));
  return c * (1 - std::pow(v / v0, 4) - (h_star / gap) * (h_star / gap));
}

VehicleState at(double pos, double vel) {
  VehicleState s;
  s.pos = pos;
  s.vel = vel;
  return s;
}

TEST(Idm, FreeRoadLimit) {
  const IdmParams p;
  EXPECT_DOUBLE_EQ(idm_accel(0.0, std::nullopt, 0.0, p), 1.0);
  EXPECT_NEAR(idm_accel(30.0, std::nullopt, 0.0, p), 0.0, 1e-12);
  EXPECT_NEAR(idm_accel(30.0, 1e9, 30.0, p), 0.0, 1e-12);
}

TEST(Idm, HandValue) {
  const IdmParams p;
  const double a = idm_accel(10.0, 20.0, 10.0, p);
  EXPECT_NEAR(a, 1 - std::pow(10.0 / 30.0, 4) - std::pow(11.5 / 20.0, 2), 1e-12);
  EXPECT_NEAR(a, 0.65702, 1e-5);
}

TEST(Idm, MatchesOracleAndBoundedByC) {
  const IdmParams p;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> vel(0, 20), gap(0.1, 200), lv(0, 20);
  for (int i = 0; i < 1000; ++i) {
    const double v = vel(rng), h = gap(rng), l = lv(rng);
    const double a = idm_accel(v, h, l, p);
    EXPECT_NEAR(a, oracle_idm(v, h, v - l), 1e-9 * std::max(1.0, std::abs(a)));
    EXPECT_LE(a, p.c);
  }
}

TEST(Idm, MonotoneInGap) {
  const IdmParams p;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> vel(0, 20), gap(0.05, 150), lv(0, 20);
  for (int i = 0; i < 1000; ++i) {
    const double v = vel(rng), l = lv(rng);
    double g1 = gap(rng), g2 = gap(rng);
    if (g1 > g2) std::swap(g1, g2);
    EXPECT_LE(idm_accel(v, g1, l, p), idm_accel(v, g2, l, p));
  }
}

TEST(Idm, NonPositiveGapIsASafetyViolation) {
  const IdmParams p;
  EXPECT_THROW(idm_accel(5.0, 0.0, 0.0, p), SafetyViolation);
  VehicleState ego = at(10.0, 5.0);
  EXPECT_THROW(idm_accel(ego, LeaderView{14.0, 0.0, 5.0}, p), SafetyViolation);
}

TEST(Idm, SampledParamsStayPositive) {
  HumanDriverModel m;
  m.kind = ControllerKind::kMixedIdm;
  m.param_rel_std = 0.5;
  Rng rng = make_rng(1);
  const IdmParams base;
  for (int i = 0; i < 2000; ++i) {
    const IdmParams s = sample_idm_params(m, base, rng);
    EXPECT_GT(s.v0, 0);
    EXPECT_GT(s.T, 0);
    EXPECT_GT(s.h0, 0);
    EXPECT_GT(s.c, 0);
    EXPECT_GT(s.b, 0);
    EXPECT_EQ(s.delta, 4.0);
  }
  m.kind = ControllerKind::kNoisyIdm;
  const IdmParams same = sample_idm_params(m, base, rng);
  EXPECT_EQ(same.v0, base.v0);
  EXPECT_EQ(same.T, base.T);
}

TEST(Idm, SampledParamsWithinTruncation) {
  HumanDriverModel m;
  m.kind = ControllerKind::kMixedIdm;
  Rng rng = make_rng(2);
  const IdmParams base;
  double mean_t = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    const IdmParams s = sample_idm_params(m, base, rng);
    EXPECT_LE(std::abs(s.T - base.T), 2 * 0.1 * base.T + 1e-12);
    EXPECT_LE(std::abs(s.v0 - base.v0), 2 * 0.1 * base.v0 + 1e-12);
    mean_t += s.T / n;
  }
  EXPECT_NEAR(mean_t, 1.0, 0.01);
}

TEST(RedLight, RedWithoutLeader) {
  const Limits lim;
  const auto l = red_light_leader(at(200, 10), Indication::kRed, 250, 1.5, lim, 0.5);
  ASSERT_TRUE(l.has_value());
  EXPECT_EQ(l->pos, 250.0);
  EXPECT_EQ(l->vel, 0.0);
  EXPECT_EQ(l->length, 0.0);
}

TEST(RedLight, GreenGivesNone) {
  const Limits lim;
  EXPECT_FALSE(red_light_leader(at(200, 10), Indication::kGreen, 250, 1.5, lim, 0.5));
}

TEST(RedLight, PastTheLineGivesNone) {
  const Limits lim;
  EXPECT_FALSE(red_light_leader(at(251, 10), Indication::kRed, 250, 1.5, lim, 0.5));
}

TEST(RedLight, YellowStopsOnlyIfComfortable) {
  const Limits lim;
  // 15 m/s needs 75 m at 1.5 m/s^2.
  EXPECT_TRUE(red_light_leader(at(100, 15), Indication::kYellow, 250, 1.5, lim, 0.5));
  EXPECT_FALSE(red_light_leader(at(200, 15), Indication::kYellow, 250, 1.5, lim, 0.5));
}

TEST(RedLight, NearerQueuedLeaderWins) {
  const Limits lim;
  const VehicleState ego = at(200, 10);
  const auto light = red_light_leader(ego, Indication::kRed, 250, 1.5, lim, 0.5);
  const LeaderView queued{240.0, 0.0, 5.0};
  const auto chosen = nearer_leader(ego, queued, light);
  ASSERT_TRUE(chosen);
  EXPECT_EQ(chosen->pos, 240.0);
  const auto far = nearer_leader(ego, LeaderView{300, 10, 5}, light);
  EXPECT_EQ(far->pos, 250.0);
}

TEST(Step, UniformMotion) {
  const Limits lim;
  const VehicleState s = step_vehicle(at(3.0, 10.0), 0.0, 0.5, lim);
  EXPECT_DOUBLE_EQ(s.pos, 8.0);
  EXPECT_DOUBLE_EQ(s.vel, 10.0);
}

TEST(Step, TruncatedAtZeroSpeed) {
  const Limits lim;
  VehicleState in = at(0.0, 0.3);
  const VehicleState s = step_vehicle(in, -1.0, 0.5, lim);
  EXPECT_EQ(s.vel, 0.0);
  EXPECT_DOUBLE_EQ(s.pos, (0.3 + 0.0) / 2 * 0.5);
  EXPECT_TRUE(s.stopped_flag);
  EXPECT_EQ(s.stop_count, 1);
}

TEST(Step, ClampsCommand) {
  const Limits lim;
  EXPECT_EQ(step_vehicle(at(0, 5), 10.0, 0.5, lim).accel, 3.0);
  EXPECT_EQ(step_vehicle(at(0, 5), -10.0, 0.5, lim).accel, -3.0);
}

TEST(Step, NeverExceedsSpeedLimit) {
  const Limits lim;
  const VehicleState s = step_vehicle(at(0, 14.8), 3.0, 0.5, lim);
  EXPECT_LE(s.vel, 15.0);
  EXPECT_NEAR(s.vel, 15.0, 1e-12);
}

TEST(Step, StopCountOnlyOnTransitions) {
  const Limits lim;
  VehicleState s = at(0, 0.5);
  s = step_vehicle(s, -3.0, 0.5, lim);
  s = step_vehicle(s, 0.0, 0.5, lim);
  s = step_vehicle(s, 0.0, 0.5, lim);
  EXPECT_EQ(s.stop_count, 1);
  s = step_vehicle(s, 1.0, 0.5, lim);
  EXPECT_FALSE(s.stopped_flag);
  s = step_vehicle(s, -3.0, 0.5, lim);
  EXPECT_EQ(s.stop_count, 2);
}

TEST(Step, DistanceIsTheTrapezoidSum) {
  const Limits lim;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> acc(-3, 3);
  VehicleState s = at(0, 7);
  double sum = 0.0;
  for (int i = 0; i < 500; ++i) {
    const VehicleState n = step_vehicle(s, acc(rng), 0.5, lim);
    sum += (s.vel + n.vel) / 2 * 0.5;
    EXPECT_GE(n.pos, s.pos);
    EXPECT_GE(n.vel, 0.0);
    s = n;
  }
  EXPECT_NEAR(s.pos, sum, 1e-9);
}

TEST(Guard, HugeGapOrNoLeaderPassesThrough) {
  const Limits lim;
  const VehicleState ego = at(0, 10);
  EXPECT_EQ(safety_guard(ego, LeaderView{1000, 10, 5}, 1.7, 0.5, lim), 1.7);
  EXPECT_EQ(safety_guard(ego, std::nullopt, 2.9, 0.5, lim), 2.9);
}

TEST(Guard, GapAtMinimumForbidsClosing) {
  const Limits lim;
  const VehicleState ego = at(0, 10);
  const LeaderView leader{lim.h_min + 5.0, 10.0, 5.0};
  EXPECT_LE(safety_guard(ego, leader, 2.0, 0.5, lim), 0.0);
}

TEST(Guard, NextGapStaysAboveMinimum) {
  const Limits lim;
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> vel(0, 15), gap(1.0, 60), acc(-3, 3);
  for (int i = 0; i < 5000; ++i) {
    const VehicleState ego = at(0, vel(rng));
    const double g = gap(rng);
    const LeaderView leader{g + 5.0, vel(rng), 5.0};
    const double a = safety_guard(ego, leader, acc(rng), 0.5, lim);
    if (a == lim.a_min) continue;  // emergency floor
    const VehicleState n = step_vehicle(ego, a, 0.5, lim);
    const double leader_next = leader.pos + leader.vel * 0.5;
    EXPECT_GE(leader_next - leader.length - n.pos, lim.h_min - 1e-6);
  }
}

}  // namespace
}  // namespace ecodrive
