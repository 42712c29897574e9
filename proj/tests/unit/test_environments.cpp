#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "aur/environments.hpp"

using namespace aur;

TEST(PendulumLoss, KnownValues) {
  EXPECT_NEAR(pendulum_loss(1.0, 1.0, 1.0), 1.101, 1e-12);
  EXPECT_NEAR(pendulum_loss(std::numbers::pi, 8.0, 2.0), 16.2736044, 1e-7);
  EXPECT_DOUBLE_EQ(pendulum_loss(0.0, 0.0, 0.0), 0.0);
  // Angles wrap before squaring.
  EXPECT_NEAR(pendulum_loss(2 * std::numbers::pi + 0.5, 0.0, 0.0), 0.25, 1e-12);
}

TEST(Pendulum, OneStepMatchesHandComputedDynamics) {
  Pendulum p;
  p.set_physical_state(0.3, -0.4);
  const StepResult r = p.step(Vec::Constant(1, 1.5));
  const double acc = 3.0 * 10.0 / 2.0 * std::sin(0.3) + 3.0 * 1.5;
  const double td = -0.4 + 0.05 * acc;
  const double th = 0.3 + 0.05 * td;
  EXPECT_NEAR(p.theta(), th, 1e-14);
  EXPECT_NEAR(p.theta_dot(), td, 1e-14);
  EXPECT_NEAR(r.reward, -(0.09 + 0.1 * 0.16 + 0.001 * 2.25), 1e-14);
  EXPECT_NEAR(r.observation[0], std::cos(th), 1e-14);
  EXPECT_FALSE(r.done);
}

TEST(Pendulum, ClipsTorqueAndSpeed) {
  Pendulum p;
  p.set_physical_state(0.0, 7.9);
  const StepResult r = p.step(Vec::Constant(1, 50.0));
  EXPECT_DOUBLE_EQ(p.theta_dot(), 8.0);
  EXPECT_NEAR(r.reward, -(0.1 * 7.9 * 7.9 + 0.001 * 4.0), 1e-12);
}

TEST(Pendulum, RewardsStayWithinTheoreticalBounds) {
  Rng rng(0);
  Environment env = make_environment("pendulum");
  env.reset(rng);
  int steps_in_episode = 0;
  for (int i = 0; i < 20000; ++i) {
    const StepResult r = env.step(Vec::Constant(1, rng.uniform(-3, 3)));
    ASSERT_LE(r.reward, 0.0);
    ASSERT_GE(r.reward, -16.2736044);
    if (r.done || ++steps_in_episode == 200) {
      env.reset(rng);
      steps_in_episode = 0;
    }
  }
}

TEST(Pendulum, EpisodeEndsOnlyAtHorizon) {
  Rng rng(1);
  Environment env = make_environment("pendulum");
  env.reset(rng);
  for (int t = 1; t <= 200; ++t) {
    const StepResult r = env.step(Vec::Constant(1, 2.0));
    EXPECT_EQ(r.done, t == 200);
  }
}

TEST(CartPoleSuccess, Cases) {
  EXPECT_EQ(cartpole_success(Vec::Zero(4), 1), 1);
  EXPECT_EQ(cartpole_success(Vec{{2.5, 0, 0, 0}}, 1), 0);
  EXPECT_EQ(cartpole_success(Vec{{0, 0, 0.25, 0}}, 1), 0);
  EXPECT_EQ(cartpole_success(Vec{{-2.39, 3, -0.2, -3}}, 1), 1);
  EXPECT_EQ(cartpole_success(Vec::Zero(4), 0), 0);  // absorbing
}

TEST(CartPole, OneStepMatchesHandComputedDynamics) {
  CartPole c;
  const Vec s{{0.01, -0.02, 0.03, 0.04}};
  c.set_state(s);
  const StepResult r = c.step(Vec::Constant(1, -10.0));
  const double f = -10.0, mt = 1.1, pml = 0.05;
  const double temp = (f + pml * 0.04 * 0.04 * std::sin(0.03)) / mt;
  const double tacc = (9.8 * std::sin(0.03) - std::cos(0.03) * temp) /
                      (0.5 * (4.0 / 3.0 - 0.1 * std::cos(0.03) * std::cos(0.03) / mt));
  const double xacc = temp - pml * tacc * std::cos(0.03) / mt;
  EXPECT_NEAR(r.observation[0], 0.01 + 0.02 * -0.02, 1e-15);
  EXPECT_NEAR(r.observation[1], -0.02 + 0.02 * xacc, 1e-15);
  EXPECT_NEAR(r.observation[2], 0.03 + 0.02 * 0.04, 1e-15);
  EXPECT_NEAR(r.observation[3], 0.04 + 0.02 * tacc, 1e-15);
  EXPECT_DOUBLE_EQ(r.reward, 1.0);
  EXPECT_FALSE(r.done);
}

TEST(CartPole, FailureTerminatesWithZeroReward) {
  CartPole c;
  c.set_state(Vec{{0.0, 0.0, 0.2, 2.0}});
  const StepResult r = c.step(Vec::Constant(1, 10.0));
  EXPECT_DOUBLE_EQ(r.reward, 0.0);
  EXPECT_TRUE(r.done);
}

TEST(Environment, ZeroPerturbationIsIdentity) {
  Rng rng(3);
  for (const auto& name : environment_names()) {
    const Environment base = make_environment(name);
    const Environment same = base.perturbed(0.0, rng);
    Environment a = base, b = same;
    Rng ra(9), rb(9);
    a.reset(ra);
    b.reset(rb);
    for (int t = 0; t < 50; ++t) {
      const Vec u = Vec::Constant(1, t % 2 ? 1.0 : -1.0);
      const StepResult x = a.step(u), y = b.step(u);
      ASSERT_EQ(x.observation, y.observation);
      ASSERT_EQ(x.reward, y.reward);
      if (x.done) break;
    }
  }
  EXPECT_THROW(make_environment("pendulum").perturbed(-0.1, rng), InvalidInput);
}

TEST(Environment, PerturbationChangesParameters) {
  Rng rng(4);
  const Environment p = make_environment("pendulum").perturbed(0.1, rng);
  EXPECT_NE(std::get<Pendulum>(p.variant()).params().max_torque, 2.0);
  const Environment c = make_environment("cartpole").perturbed(0.1, rng);
  EXPECT_NE(std::get<CartPole>(c.variant()).params().mass_pole, 0.1);
}

TEST(Environment, ResetScaleWidensDistribution) {
  Rng rng(5);
  Environment wide = make_environment("cartpole", 2.0);
  double max_abs = 0.0;
  for (int i = 0; i < 500; ++i) max_abs = std::max(max_abs, wide.reset(rng).cwiseAbs().maxCoeff());
  EXPECT_GT(max_abs, 0.05);
  EXPECT_LE(max_abs, 0.1);
  EXPECT_THROW(make_environment("acrobot"), InvalidInput);
}

TEST(EnvSpec, CanonicalizationProjectsAnglesAndSnapsActions) {
  const EnvSpec p = make_environment("pendulum").spec();
  const Vec s = p.canonical_state(Vec{{0.6, 0.6, 9.0}});
  EXPECT_NEAR(std::hypot(s[0], s[1]), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(s[2], 8.0);
  EXPECT_DOUBLE_EQ(p.canonical_action(Vec::Constant(1, -5.0))[0], -2.0);
  const EnvSpec c = make_environment("cartpole").spec();
  EXPECT_DOUBLE_EQ(c.canonical_action(Vec::Constant(1, 0.3))[0], 10.0);
  EXPECT_DOUBLE_EQ(c.canonical_action(Vec::Constant(1, -7.0))[0], -10.0);
}

TEST(Environment, RejectsNonFiniteInputs) {
  Environment env = make_environment("pendulum");
  EXPECT_THROW(env.step(Vec::Constant(1, std::nan(""))), FaultError);
  EXPECT_THROW(env.set_state(Vec::Zero(2)), ProbeError);
}
