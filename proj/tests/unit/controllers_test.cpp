#include "ecodrive/controllers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ecodrive/errors.hpp"

namespace ecodrive {
namespace {

VehicleState at(double pos, double vel, int approach = 0) {
  VehicleState s;
  s.pos = pos;
  s.vel = vel;
  s.approach = approach;
  return s;
}

Observation random_obs(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  Observation o;
  o.v_cav = u(rng);
  o.p_cav = u(rng);
  o.tl_phase = {1.0, 0.0};
  o.v_lead = u(rng);
  o.p_lead = u(rng);
  o.v_follow = u(rng);
  o.p_follow = u(rng);
  o.tl_time = u(rng);
  return o;
}

TEST(Human, VanillaIsPlainIdm) {
  const IdmParams p;
  Rng rng = make_rng(1);
  const VehicleState ego = at(0, 10);
  const LeaderView leader{25.0, 10.0, 5.0};
  EXPECT_EQ(control_human(ControllerKind::kVanillaIdm, ego, leader, p, 0.2, rng),
            idm_accel(ego, leader, p));
}

TEST(Human, NoisyIsUnbiasedAndBounded) {
  const IdmParams p;
  Rng rng = make_rng(2);
  const VehicleState ego = at(0, 10);
  const LeaderView leader{25.0, 10.0, 5.0};
  const double base = idm_accel(ego, leader, p);
  double mean = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double a = control_human(ControllerKind::kNoisyIdm, ego, leader, p, 0.2, rng);
    EXPECT_LE(std::abs(a - base), 0.2);
    mean += a / n;
  }
  EXPECT_NEAR(mean, base, 0.01);
}

class GlideTest : public ::testing::Test {
 protected:
  Scenario scenario = build_scenario(ScenarioConfig{});
  IdmParams idm;
  Limits limits;
  GlideSettings settings;

  GlideContext context(int approach, double now) const {
    GlideContext c;
    c.plan = &scenario.plan;
    c.approach = approach;
    c.now = now;
    c.stop_line = 250.0;
    return c;
  }

  // Drives one EcoGlide vehicle alone, stopping at the line while the
  // signal requires it. Returns the first time the line is passed and the
  // slowest speed seen before that.
  std::pair<double, double> drive(int approach, double t0, double pos, double vel) const {
    VehicleState s = at(pos, vel, approach);
    double t = t0, v_min = vel;
    while (s.pos < 250.0 && t < t0 + 200.0) {
      const GlideCommand cmd = control_eco_glide(s, context(approach, t), idm, limits, settings);
      const PhaseState ph = signal_state(scenario.plan, t);
      const auto light = red_light_leader(s, ph.indication[approach], 250.0, idm.b, limits, 0.5);
      const double a = safety_guard(s, light, cmd.accel, 0.5, limits);
      s = step_vehicle(s, a, 0.5, limits);
      t += 0.5;
      v_min = std::min(v_min, s.vel);
    }
    return {t, v_min};
  }
};

TEST_F(GlideTest, GreenClearRoadAccelerates) {
  const GlideCommand c = control_eco_glide(at(100, 10), context(0, 1.0), idm, limits, settings);
  EXPECT_GT(c.accel, 0.0);
  EXPECT_FALSE(c.stopping);
}

TEST_F(GlideTest, RedTenSecondsOutGlidesWithoutStopping) {
  // East is red until t = 34; start 10 s before onset, 100 m out at 15 m/s.
  const auto [t_line, v_min] = drive(2, 24.0, 150.0, 15.0);
  EXPECT_GE(t_line, 34.0);
  EXPECT_GT(v_min, 0.1);  // never stops
  // Average approach speed d / t* is close to 100 m over ~10 s.
  const double avg = 100.0 / (t_line - 24.0);
  EXPECT_GT(avg, 7.5);
  EXPECT_LE(avg, 10.0 + 1e-9);
}

TEST_F(GlideTest, TooCloseOnRedStops) {
  // 5 m from the line with 25 s of red left: no glide above v_min fits.
  const GlideCommand c = control_eco_glide(at(245, 5), context(2, 9.0), idm, limits, settings);
  EXPECT_TRUE(c.stopping);
  EXPECT_LT(c.accel, 0.0);
}

TEST_F(GlideTest, CruisesAtSpeedLimitOnEmptyGreenRoad) {
  Scenario all_green = scenario;
  all_green.plan.phases[0].green_s = 1e6;
  VehicleState s = at(0, 10, 0);
  for (int k = 0; k < 100; ++k) {
    GlideContext c = context(0, 0.5 * k);
    c.plan = &all_green.plan;
    const GlideCommand cmd = control_eco_glide(s, c, idm, limits, settings);
    s = step_vehicle(s, cmd.accel, 0.5, limits);
  }
  EXPECT_NEAR(s.vel, 15.0, 0.1);
}

TEST(Policy, ZeroWeightsMeanIsClampedBias) {
  PolicyParams p = make_policy(9, 0);
  p.actor = Mlp::zeros({9, 4, 4, 1});
  p.actor.layers().back().bias[0] = 7.5;
  std::mt19937_64 g(1);
  Rng rng = make_rng(0);
  const Limits lim;
  const PolicySample s = policy_action(random_obs(g), p, ActionMode::kMean, rng, lim);
  EXPECT_EQ(s.raw, 7.5);
  EXPECT_EQ(s.applied, 3.0);
}

TEST(Policy, ActionsAreBoundedAndDeterministic) {
  PolicyParams p = make_policy(9, 3, 16, 5.0);
  const Limits lim;
  std::mt19937_64 g(2);
  for (int i = 0; i < 200; ++i) {
    const Observation o = random_obs(g);
    Rng r1 = make_rng(i), r2 = make_rng(i);
    const PolicySample a = policy_action(o, p, ActionMode::kSample, r1, lim);
    const PolicySample b = policy_action(o, p, ActionMode::kSample, r2, lim);
    EXPECT_EQ(a.raw, b.raw);
    EXPECT_GE(a.applied, -3.0);
    EXPECT_LE(a.applied, 3.0);
  }
}

TEST(Policy, NonFiniteWeightsRejected) {
  PolicyParams p = make_policy(9, 0);
  p.actor.layers()[0].weight(0, 0) = std::nan("");
  std::mt19937_64 g(1);
  Rng rng = make_rng(0);
  EXPECT_THROW(policy_action(random_obs(g), p, ActionMode::kMean, rng, Limits{}), ValidationError);
}

TEST(Policy, LogProbPeaksAtMean) {
  PolicyParams p = make_policy(9, 4, 8);
  std::mt19937_64 g(5);
  const Observation o = random_obs(g);
  Rng rng = make_rng(0);
  const double mean = policy_action(o, p, ActionMode::kMean, rng, Limits{}).raw;
  const LogProbGrad at_mean = policy_logprob_and_grad(o, mean, p);
  EXPECT_NEAR(at_mean.grad.head(p.actor.num_params()).norm(), 0.0, 1e-12);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 100; ++i) EXPECT_GE(at_mean.logprob, policy_logprob(o, u(g), p));
}

// Central differences with h = 1e-5 on a 4-unit network.
TEST(Policy, GradientMatchesFiniteDifferences) {
  PolicyParams p = make_policy(9, 11, 4, 0.7);
  std::mt19937_64 g(6);
  for (int trial = 0; trial < 5; ++trial) {
    const Observation o = random_obs(g);
    const double action = std::uniform_real_distribution<double>(-2, 2)(g);
    const LogProbGrad lg = policy_logprob_and_grad(o, action, p);
    const Eigen::VectorXd theta = p.actor_flat();
    Eigen::VectorXd fd(theta.size());
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      PolicyParams q = p;
      Eigen::VectorXd t = theta;
      t[i] += h;
      q.set_actor_flat(t);
      const double up = policy_logprob(o, action, q);
      t[i] -= 2 * h;
      q.set_actor_flat(t);
      const double down = policy_logprob(o, action, q);
      fd[i] = (up - down) / (2 * h);
    }
    EXPECT_LT((lg.grad - fd).norm() / fd.norm(), 1e-4);
  }
}

TEST(Network, JvpMatchesFiniteDifferences) {
  Rng rng = make_rng(8);
  const Mlp net({5, 6, 6, 2}, rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 3);
  Eigen::VectorXd d = Eigen::VectorXd::Random(net.num_params());
  Mlp::Tape tape;
  net.forward(x, tape);
  const Eigen::MatrixXd jv = net.jvp(tape, d);
  Mlp up = net, down = net;
  const double h = 1e-6;
  up.set_flat(net.flat() + h * d);
  down.set_flat(net.flat() - h * d);
  const Eigen::MatrixXd fd = (up.forward(x) - down.forward(x)) / (2 * h);
  EXPECT_LT((jv - fd).norm() / fd.norm(), 1e-7);
}

TEST(Network, BackwardIsTransposeOfJvp) {
  Rng rng = make_rng(9);
  const Mlp net({4, 5, 3}, rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 7);
  Eigen::VectorXd d = Eigen::VectorXd::Random(net.num_params());
  Eigen::MatrixXd u = Eigen::MatrixXd::Random(3, 7);
  Mlp::Tape tape;
  net.forward(x, tape);
  const double lhs = (u.array() * net.jvp(tape, d).array()).sum();
  const double rhs = net.backward(tape, u).dot(d);
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
}

TEST(Checkpoint, RoundTripsBitwise) {
  PolicyParams p = make_policy(9, 12);
  p.value_shift = -1234.5678;
  p.value_scale = 3.0e11;
  const std::string text = serialize_policy(p);
  const PolicyParams q = deserialize_policy(text);
  EXPECT_EQ(serialize_policy(q), text);
  EXPECT_TRUE((p.actor.flat().array() == q.actor.flat().array()).all());
  EXPECT_TRUE((p.critic.flat().array() == q.critic.flat().array()).all());
  EXPECT_EQ(p.log_std, q.log_std);
  EXPECT_EQ(p.value_scale, q.value_scale);

  const auto path = std::filesystem::temp_directory_path() / "ecodrive_ckpt_test.txt";
  save_policy(p, path);
  EXPECT_EQ(serialize_policy(load_policy(path)), text);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsGarbage) {
  EXPECT_THROW(deserialize_policy("not a checkpoint"), Error);
  EXPECT_THROW(load_policy("/nonexistent/dir/policy.txt"), IoError);
}

}  // namespace
}  // namespace ecodrive
