#include "ecodrive/environment.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ecodrive/errors.hpp"

namespace ecodrive {
namespace {

std::shared_ptr<const EnvConfig> config_with(double penetration, int warmup = 100,
                                             double inflow = 800.0) {
  auto c = std::make_shared<EnvConfig>();
  c->scenario.penetration_pct = penetration;
  c->scenario.warmup_steps = warmup;
  c->scenario.inflow_veh_per_hr = inflow;
  return c;
}

// A world with no scheduled arrivals, for scripted placements.
World empty_world(int warmup = 0) {
  auto c = config_with(100, warmup, 0.0);
  return reset(c, 0);
}

std::map<std::uint64_t, double> constant_actions(const World& w, double a) {
  std::map<std::uint64_t, double> out;
  if (!w.in_warmup()) {
    for (auto id : w.cav_ids()) out[id] = a;
  }
  return out;
}

TEST(Observe, LoneCavAtEntryHasSentinels) {
  World w = empty_world();
  const auto id = w.spawn(0, 0.0, 10.0, ControllerKind::kPolicy);
  const Observation o = observe(w, id);
  EXPECT_DOUBLE_EQ(o.v_cav, 10.0 / 15.0);
  EXPECT_EQ(o.p_cav, 0.0);
  EXPECT_EQ(o.v_lead, 1.0);
  EXPECT_EQ(o.p_lead, 1.0);
  EXPECT_EQ(o.v_follow, 1.0);
  EXPECT_EQ(o.p_follow, 1.0);
  EXPECT_EQ(o.tl_time, 1.0);
  ASSERT_EQ(o.tl_phase.size(), 2u);
  EXPECT_EQ(o.tl_phase[0] + o.tl_phase[1], 1.0);
}

TEST(Observe, StoppedAtLineOnRed) {
  World w = empty_world();
  // East approach is red at t = 0; the stop line is at 250 m.
  const auto id = w.spawn(2, 249.99, 0.0, ControllerKind::kPolicy);
  const Observation o = observe(w, id);
  EXPECT_EQ(o.v_cav, 0.0);
  EXPECT_NEAR(o.p_cav, 249.99 / 510.0, 1e-12);
  EXPECT_NEAR(o.tl_time, 34.0 / 68.0, 1e-12);
  EXPECT_GT(o.tl_time, 0.0);
  EXPECT_EQ(o.tl_phase[1], 1.0);
}

TEST(Observe, LeaderAtRangeBoundaryIsExcluded) {
  World w = empty_world();
  const auto id = w.spawn(0, 10.0, 10.0, ControllerKind::kPolicy);
  w.spawn(0, 60.0, 5.0, ControllerKind::kVanillaIdm);
  const Observation o = observe(w, id);
  EXPECT_EQ(o.v_lead, 1.0);
  EXPECT_EQ(o.p_lead, 1.0);

  World w2 = empty_world();
  const auto id2 = w2.spawn(0, 10.0, 10.0, ControllerKind::kPolicy);
  w2.spawn(0, 59.0, 6.0, ControllerKind::kVanillaIdm);
  w2.spawn(0, 0.0, 3.0, ControllerKind::kVanillaIdm);
  const Observation o2 = observe(w2, id2);
  EXPECT_DOUBLE_EQ(o2.v_lead, 6.0 / 15.0);
  EXPECT_DOUBLE_EQ(o2.p_lead, 49.0 / 50.0);
  EXPECT_DOUBLE_EQ(o2.v_follow, 3.0 / 15.0);
  EXPECT_DOUBLE_EQ(o2.p_follow, 10.0 / 50.0);
}

TEST(Observe, UnknownOrHumanIdIsALookupError) {
  World w = empty_world();
  const auto human = w.spawn(0, 0.0, 10.0, ControllerKind::kVanillaIdm);
  EXPECT_THROW(observe(w, 999), LookupError);
  EXPECT_THROW(observe(w, human), LookupError);
}

TEST(Observe, ObservationsStayInUnitBoxUnderRandomActions) {
  auto c = config_with(100, 0);
  World w = reset(c, 3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> act(-3, 3);
  while (!w.done()) {
    std::map<std::uint64_t, double> a;
    for (auto id : w.cav_ids()) a[id] = act(rng);
    const StepResult r = step(w, a);
    ASSERT_TRUE((r.observations.matrix.array() >= 0.0).all());
    ASSERT_TRUE((r.observations.matrix.array() <= 1.0).all());
    for (Eigen::Index k = 0; k < r.observations.matrix.cols(); ++k) {
      EXPECT_EQ(r.observations.matrix(2, k) + r.observations.matrix(3, k), 1.0);
    }
  }
}

TEST(PhaseStats, EmptyGroup) {
  World w = empty_world();
  const PhaseGroupStats s = phase_stats(w, 0);
  EXPECT_EQ(s.size, 0);
  EXPECT_EQ(s.fuel, 0.0);
  EXPECT_EQ(s.speed, 0.0);
  EXPECT_EQ(s.stopped, 0.0);
  EXPECT_FALSE(s.approach_start_stop);
  EXPECT_THROW(phase_stats(w, 2), LookupError);
}

TEST(PhaseStats, IdlingQueue) {
  World w = empty_world();
  for (int k = 0; k < 4; ++k) w.spawn(2, 249.0 - 7.0 * k, 0.0, ControllerKind::kVanillaIdm);
  const PhaseGroupStats s = phase_stats(w, 1);
  EXPECT_EQ(s.size, 4);
  EXPECT_EQ(s.stopped, 1.0);
  EXPECT_EQ(s.speed, 0.0);
  EXPECT_EQ(s.fuel, 0.0);  // idle is the bottom of the min-max range
  EXPECT_FALSE(s.approach_start_stop);
}

TEST(PhaseStats, OneOfFourStopped) {
  World w = empty_world();
  w.spawn(0, 200.0, 0.0, ControllerKind::kVanillaIdm);
  w.spawn(0, 150.0, 7.5, ControllerKind::kVanillaIdm);
  w.spawn(1, 100.0, 15.0, ControllerKind::kVanillaIdm);
  w.spawn(1, 50.0, 15.0, ControllerKind::kVanillaIdm);
  const PhaseGroupStats s = phase_stats(w, 0);
  EXPECT_EQ(s.stopped, 0.25);
  EXPECT_DOUBLE_EQ(s.speed, (0.0 + 0.5 + 1.0 + 1.0) / 4);
}

TEST(PhaseStats, StopNearEntranceFlagsStartStop) {
  World w = empty_world();
  w.spawn(3, 10.0, 0.0, ControllerKind::kVanillaIdm);
  EXPECT_TRUE(phase_stats(w, 1).approach_start_stop);
  EXPECT_FALSE(phase_stats(w, 0).approach_start_stop);
}

TEST(Reward, BranchValues) {
  const RewardCoeffs c;
  PhaseGroupStats s;
  s.approach_start_stop = true;
  EXPECT_EQ(reward(s, c), -100.0);
  EXPECT_EQ(reward_branch(s, c), 1);

  PhaseGroupStats r2;
  EXPECT_EQ(reward(r2, c), 0.0);
  EXPECT_EQ(reward_branch(r2, c), 2);

  PhaseGroupStats r3;
  r3.fuel = 0.005;
  r3.stopped = 0.2;
  r3.speed = 0.5;
  EXPECT_EQ(reward_branch(r3, c), 3);
  EXPECT_NEAR(reward(r3, c), -5 + 5 * std::exp(0.5) - 10 * 0.2, 1e-12);
  EXPECT_NEAR(reward(r3, c), 1.2436, 1e-4);

  PhaseGroupStats r4;
  r4.fuel = 0.02;
  r4.speed = 0.5;
  EXPECT_EQ(reward_branch(r4, c), 4);
  EXPECT_NEAR(reward(r4, c), -7 - 3 * std::exp(20.0) + 4 * std::exp(0.5), 1e-3);
}

TEST(Reward, ExponentIsClamped) {
  const RewardCoeffs c;
  PhaseGroupStats s;
  s.fuel = 1.0;
  s.speed = 1.0;
  s.stopped = 1.0;
  EXPECT_DOUBLE_EQ(reward(s, c), -7 - 3 * std::exp(30.0) + 4 * std::exp(1.0) - 10);
}

TEST(Reward, ExactlyOneBranchOverRandomStats) {
  const RewardCoeffs c;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution coin(0.1), small(0.5);
  for (int i = 0; i < 10000; ++i) {
    PhaseGroupStats s;
    s.fuel = small(rng) ? 0.02 * u(rng) : u(rng);
    s.speed = u(rng);
    s.stopped = coin(rng) ? 0.0 : u(rng);
    s.approach_start_stop = coin(rng);
    const bool r1 = s.approach_start_stop;
    const bool r2 = !r1 && s.fuel <= c.delta && s.stopped == 0.0;
    const bool r3 = !r1 && s.fuel <= c.delta && s.stopped > 0.0;
    const bool r4 = !r1 && s.fuel > c.delta;
    ASSERT_EQ(r1 + r2 + r3 + r4, 1);
    const int want = r1 ? 1 : r2 ? 2 : r3 ? 3 : 4;
    EXPECT_EQ(reward_branch(s, c), want);
    EXPECT_TRUE(std::isfinite(reward(s, c)));
  }
}

TEST(Step, ZeroCavsGiveNoRewards) {
  World w = reset(config_with(0), 0);
  while (!w.done()) {
    const StepResult r = step(w, {});
    EXPECT_TRUE(r.rewards.empty());
  }
}

TEST(Step, SameGroupSameReward) {
  World w = empty_world();
  const auto a = w.spawn(0, 100.0, 10.0, ControllerKind::kPolicy);
  const auto b = w.spawn(1, 120.0, 8.0, ControllerKind::kPolicy);
  const auto c = w.spawn(2, 120.0, 8.0, ControllerKind::kPolicy);
  const StepResult r = step(w, {{a, 0.3}, {b, -0.5}, {c, 0.0}});
  ASSERT_EQ(r.rewards.size(), 3u);
  EXPECT_EQ(r.rewards.at(a), r.rewards.at(b));
  EXPECT_EQ(r.rewards.at(a), r.phase_rewards[0]);
  EXPECT_EQ(r.rewards.at(c), r.phase_rewards[1]);
}

TEST(Step, RewardsStartAfterWarmup) {
  World w = reset(config_with(100), 1);
  for (int k = 0; k < 100; ++k) {
    ASSERT_EQ(w.step_index(), k);
    const StepResult r = step(w, constant_actions(w, 0.0));
    EXPECT_FALSE(r.recorded);
    EXPECT_TRUE(r.rewards.empty());
  }
  EXPECT_EQ(w.recorded_reward_total(), 0.0);
  EXPECT_FALSE(w.in_warmup());
  const StepResult r = step(w, constant_actions(w, 0.0));
  EXPECT_TRUE(r.recorded);
  EXPECT_FALSE(r.rewards.empty());
}

TEST(Step, RejectsBadActions) {
  World w = empty_world();
  const auto id = w.spawn(0, 100.0, 10.0, ControllerKind::kPolicy);
  EXPECT_THROW(step(w, {{id, std::nan("")}}), ValidationError);
  EXPECT_THROW(step(w, {{id, INFINITY}}), ValidationError);
  EXPECT_THROW(step(w, {}), ValidationError);
  EXPECT_EQ(w.step_index(), 0);
}

TEST(Step, DoneAfterHorizon) {
  World w = reset(config_with(0), 0);
  int n = 0;
  while (!w.done()) {
    step(w, {});
    ++n;
  }
  EXPECT_EQ(n, 600);
  EXPECT_THROW(step(w, {}), ValidationError);
}

void expect_same_world(const World& a, const World& b) {
  ASSERT_EQ(a.finished().size(), b.finished().size());
  for (std::size_t i = 0; i < a.finished().size(); ++i) {
    EXPECT_EQ(a.finished()[i].id, b.finished()[i].id);
    EXPECT_EQ(a.finished()[i].exit_time, b.finished()[i].exit_time);
    EXPECT_EQ(a.finished()[i].cumulative_fuel, b.finished()[i].cumulative_fuel);
  }
  for (int k = 0; k < kNumApproaches; ++k) {
    ASSERT_EQ(a.lane(k).size(), b.lane(k).size());
    for (std::size_t i = 0; i < a.lane(k).size(); ++i) {
      EXPECT_EQ(a.lane(k)[i].state.pos, b.lane(k)[i].state.pos);
      EXPECT_EQ(a.lane(k)[i].state.vel, b.lane(k)[i].state.vel);
    }
  }
}

World run_humans(std::shared_ptr<const EnvConfig> c, std::uint64_t seed) {
  World w = reset(c, seed);
  while (!w.done()) step(w, {});
  return w;
}

TEST(Reset, DeterministicAndSeedFreeForVanillaIdm) {
  auto c = config_with(0);
  expect_same_world(run_humans(c, 5), run_humans(c, 5));
  expect_same_world(run_humans(c, 5), run_humans(c, 6));
}

TEST(Reset, NoisyDriversDependOnSeed) {
  auto c = std::make_shared<EnvConfig>(*config_with(0));
  c->scenario.human_model = ControllerKind::kNoisyIdm;
  const World a = run_humans(c, 1), b = run_humans(c, 1), d = run_humans(c, 2);
  expect_same_world(a, b);
  EXPECT_NE(a.lane(0).front().state.pos, d.lane(0).front().state.pos);
}

TEST(Step, ReplayedIdmActionsReproduceTheBaseline) {
  auto human = config_with(0, 0);
  auto cav = config_with(100, 0);
  World base = reset(human, 0);
  World replay = reset(cav, 0);
  while (!base.done()) {
    step(base, {});
    std::map<std::uint64_t, double> actions;
    for (auto id : replay.cav_ids()) actions[id] = base.find(id) ? base.find(id)->accel : 0.0;
    // Vehicles that left the baseline this step still need their last action.
    for (const auto& f : base.finished()) {
      if (replay.find(f.id)) actions[f.id] = f.accel;
    }
    step(replay, actions);
  }
  expect_same_world(base, replay);
}

TEST(Safety, LongVanillaRunIsCollisionFree) {
  auto c = std::make_shared<EnvConfig>();
  c->scenario.penetration_pct = 0;
  c->scenario.horizon_steps = 10000;
  World w = reset(c, 0);
  double min_gap = 1e9;
  while (!w.done()) {
    step(w, {});
    for (int a = 0; a < kNumApproaches; ++a) {
      const auto& lane = w.lane(a);
      for (std::size_t i = 1; i < lane.size(); ++i) {
        min_gap = std::min(min_gap, gap_to(lane[i].state, leader_view(lane[i - 1].state)));
      }
    }
  }
  EXPECT_GE(min_gap, 0.0);
  EXPECT_GT(w.finished().size(), 1000u);
}

TEST(Trajectory, OneRecordPerVehicleStep) {
  auto c = std::make_shared<EnvConfig>();
  c->scenario.penetration_pct = 0;
  c->record_trajectories = true;
  World w = reset(c, 0);
  std::size_t expected = 0;
  while (!w.done()) {
    expected += w.num_vehicles();
    step(w, {});
  }
  EXPECT_EQ(w.trajectory().size(), expected);
  EXPECT_FALSE(w.crossings().empty());
}

}  // namespace
}  // namespace ecodrive
