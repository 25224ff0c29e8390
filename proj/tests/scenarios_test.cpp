#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nashmodes/errors.hpp"
#include "nashmodes/scenarios.hpp"
#include "support.hpp"

namespace nashmodes {
namespace {

TEST(UnicycleStep, StraightAhead) {
  const auto n = unicycle_step({0, 0, 0, 1, 0}, {0, 0}, 0.1);
  EXPECT_DOUBLE_EQ(n.p, 0.1);
  EXPECT_EQ(n.q, 0.0);
  EXPECT_EQ(n.theta, 0.0);
  EXPECT_EQ(n.nu, 1.0);
  EXPECT_EQ(n.omega, 0.0);
}

TEST(UnicycleStep, FacingUp) {
  const auto n = unicycle_step({0, 0, M_PI / 2, 2, 0}, {0, 0}, 0.5);
  EXPECT_NEAR(n.q, 1.0, 1e-12);
  EXPECT_NEAR(n.p, 0.0, 1e-12);
}

TEST(UnicycleStep, RandomStatesMatchUpdateLines) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  for (int k = 0; k < 100; ++k) {
    const UnicycleState s{normal(rng), normal(rng), 4 * normal(rng), normal(rng), normal(rng)};
    const UnicycleInput u{normal(rng), normal(rng)};
    const double dt = 0.05 + 0.1 * std::abs(normal(rng));
    const auto n = unicycle_step(s, u, dt);
    EXPECT_EQ(n.p, s.p + dt * s.nu * std::cos(s.theta));
    EXPECT_EQ(n.q, s.q + dt * s.nu * std::sin(s.theta));
    EXPECT_EQ(n.theta, s.theta + dt * s.omega);
    EXPECT_EQ(n.nu, s.nu + u.dnu);
    EXPECT_EQ(n.omega, s.omega + u.domega);
  }
}

TEST(UnicycleStep, HeadingIsNotWrapped) {
  UnicycleState s{0, 0, 3.0, 0, 10.0};
  for (int k = 0; k < 10; ++k) s = unicycle_step(s, {0, 0}, 0.1);
  EXPECT_NEAR(s.theta, 13.0, 1e-12);
}

// Composing unicycle_step equals the registry rollout bitwise.
TEST(UnicycleStep, ComposesToRollout) {
  std::mt19937_64 rng(2);
  const GameSpec g = build_scenario(scenario_preset("obstacle_swap"));
  const auto pp = assemble_potential(g);
  const auto u = testing::random_controls(pp, rng, 0.1);
  const auto traj = rollout(pp, g.x0, u);
  UnicycleState a = UnicycleState::from_vec(g.x0.segment(0, 5));
  UnicycleState b = UnicycleState::from_vec(g.x0.segment(5, 5));
  for (int t = 0; t < g.horizon; ++t) {
    a = unicycle_step(a, {u[t][0], u[t][1]}, g.dt);
    b = unicycle_step(b, {u[t][2], u[t][3]}, g.dt);
    ASSERT_EQ(traj.states[t + 1].segment(0, 5), a.to_vec());
    ASSERT_EQ(traj.states[t + 1].segment(5, 5), b.to_vec());
  }
}

TEST(BuildScenario, HeadOnStack) {
  const GameSpec g = build_scenario(scenario_preset("head_on"));
  const auto pp = assemble_potential(g);
  EXPECT_EQ(pp.constraint_dim(), 7);
  EXPECT_EQ(g.horizon, 60);
  EXPECT_DOUBLE_EQ(g.dt, 0.1);
}

TEST(BuildScenario, ObstacleSwapMatchesPresetValues) {
  const ScenarioConfig cfg = scenario_preset("obstacle_swap");
  EXPECT_EQ(cfg.r_col, 3.0);
  EXPECT_EQ(cfg.r_obs, 4.0);
  for (const auto& b : cfg.u_bound) EXPECT_EQ(b, Eigen::Vector2d(0.15, 0.75));
  const GameSpec g = build_scenario(cfg);
  EXPECT_EQ(assemble_potential(g).constraint_dim(), 9);
  for (const auto& a : g.agents) {
    EXPECT_EQ(a.Q, Mat(0.6 * cfg.q_base.asDiagonal()));
    EXPECT_EQ(a.Qtau, Mat(100.0 * cfg.q_base.asDiagonal()));
    EXPECT_EQ(a.R, Mat(Eigen::Vector2d(8, 4).asDiagonal()));
  }
}

TEST(BuildScenario, StraightLineReferences) {
  const GameSpec g = build_scenario(scenario_preset("head_on"));
  const double speed = 16.0 / 6.0;
  for (int t = 0; t <= g.horizon; ++t) {
    const Vec& r1 = g.agents[0].reference[t];
    EXPECT_NEAR(r1[0], -8.0 + 16.0 * t / 60.0, 1e-12);
    EXPECT_EQ(r1[1], 0.0);
    EXPECT_EQ(r1[2], 0.0);
    EXPECT_NEAR(r1[3], speed, 1e-12);
    EXPECT_EQ(r1[4], 0.0);
    EXPECT_NEAR(g.agents[1].reference[t][2], M_PI, 1e-12);
  }
  EXPECT_EQ(g.x0.segment(0, 5), g.agents[0].reference.front());
}

TEST(BuildScenario, SwapReferencesMirrorAboutMidpoint) {
  const GameSpec g = build_scenario(scenario_preset("obstacle_swap"));
  for (int t = 0; t <= g.horizon; ++t) {
    const Vec& a = g.agents[0].reference[t];
    const Vec& b = g.agents[1].reference[t];
    EXPECT_NEAR(a[0], -b[0], 1e-12);
    EXPECT_NEAR(a[1], -b[1], 1e-12);
    EXPECT_NEAR(b.head(2).norm(), a.head(2).norm(), 1e-12);
    EXPECT_LT((g.agents[1].reference[g.horizon - t].head(2) - a.head(2)).norm(), 1e-12);
  }
}

TEST(BuildScenario, RejectsDegenerateConfigs) {
  ScenarioConfig cfg = scenario_preset("head_on");
  cfg.goal[0] = cfg.start[0];
  EXPECT_THROW(build_scenario(cfg), ConfigError);
  cfg = scenario_preset("obstacle_swap");
  cfg.r_obs = 2.0;
  EXPECT_THROW(build_scenario(cfg), ConfigError);
  cfg = scenario_preset("head_on");
  cfg.r_col = 0.0;
  EXPECT_THROW(build_scenario(cfg), ConfigError);
  cfg = scenario_preset("head_on");
  cfg.u_bound[1].x() = -1.0;
  EXPECT_THROW(build_scenario(cfg), ConfigError);
  EXPECT_THROW(scenario_preset("roundabout"), ConfigError);
}

TEST(ConstraintStack, Components) {
  const UnicyclePairConstraints g(3.0, true, 4.0, Eigen::Vector2d::Zero(),
                                  {Eigen::Vector2d(0.15, 0.75), Eigen::Vector2d(0.15, 0.75)});
  Vec x = Vec::Zero(10);
  x.segment(0, 2) << 0, 4;
  x.segment(5, 2) << 10, 4;
  x[3] = 1.0;
  x[8] = -0.5;
  const Vec u = (Vec(4) << 0.2, -0.5, 0.0, 1.0).finished();
  const Vec v = g.eval(x, u);
  ASSERT_EQ(v.size(), 9);
  EXPECT_NEAR(v[0], -7.0, 1e-12);
  EXPECT_NEAR(v[1], 0.0, 1e-12);
  EXPECT_NEAR(v[2], -std::hypot(10.0, 4.0) + 4.0, 1e-12);
  EXPECT_EQ(v[3], -1.0);
  EXPECT_EQ(v[4], 0.5);
  EXPECT_NEAR(v[5], 0.05, 1e-12);
  EXPECT_NEAR(v[6], -0.25, 1e-12);
  EXPECT_NEAR(v[7], -0.15, 1e-12);
  EXPECT_NEAR(v[8], 0.25, 1e-12);
}

TEST(ConstraintStack, AnalyticJacobianMatchesDifferences) {
  std::mt19937_64 rng(6);
  const auto params = constraint_params(scenario_preset("obstacle_swap"));
  const auto g = UnicyclePairConstraints::from_params(params);
  for (int k = 0; k < 20; ++k) {
    const Vec x = testing::random_vec(rng, 10, 3.0);
    Vec u = testing::random_vec(rng, 4, 0.5);
    Mat Gx, Gu, Fx, Fu;
    g.jacobian(x, u, Gx, Gu);
    g.ConstraintFn::jacobian(x, u, Fx, Fu);
    EXPECT_LT((Gx - Fx).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((Gu - Fu).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(ConstraintStack, DimensionIndependentOfState) {
  std::mt19937_64 rng(7);
  const GameSpec g = build_scenario(scenario_preset("obstacle_swap"));
  const auto pp = assemble_potential(g);
  for (int k = 0; k < 20; ++k)
    EXPECT_EQ(pp.constraints->eval(testing::random_vec(rng, 10, 10.0), testing::random_vec(rng, 4)).size(), 9);
}

// Reflecting any trajectory across the start line of the symmetric head-on game keeps its potential.
TEST(Symmetry, ReflectionPreservesPotential) {
  std::mt19937_64 rng(10);
  const GameSpec g = build_scenario(scenario_preset("head_on"));
  const auto pp = assemble_potential(g);
  for (int k = 0; k < 20; ++k) {
    const auto traj = rollout(pp, g.x0, testing::random_controls(pp, rng, 0.1));
    const auto mirrored = reflect_trajectory(g, traj);
    const double a = eval_potential(pp, traj), b = eval_potential(pp, mirrored);
    EXPECT_NEAR(a, b, 1e-9 * a);
    const auto gs = eval_constraints(pp, traj), gm = eval_constraints(pp, mirrored);
    for (int t = 0; t <= g.horizon; ++t) EXPECT_LT((gs[t] - gm[t]).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Symmetry, ReflectionOfRolloutIsRollout) {
  std::mt19937_64 rng(12);
  const GameSpec g = build_scenario(scenario_preset("head_on"));
  const auto pp = assemble_potential(g);
  const auto traj = rollout(pp, g.x0, testing::random_controls(pp, rng, 0.1));
  const auto mirrored = reflect_trajectory(g, traj);
  const auto replay = rollout(pp, mirrored.states[0], mirrored.controls);
  for (int t = 0; t <= g.horizon; ++t) EXPECT_LT((replay.states[t] - mirrored.states[t]).cwiseAbs().maxCoeff(), 1e-9);
}

}  // namespace
}  // namespace nashmodes
