#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nashmodes/errors.hpp"
#include "nashmodes/planner.hpp"
#include "nashmodes/refiner.hpp"
#include "nashmodes/scenarios.hpp"
#include "nashmodes/virtual_model.hpp"
#include "support.hpp"

namespace nashmodes {
namespace {

const Mat kA = (Mat(2, 2) << 1, 0.1, 0, 1).finished();
const Mat kB = (Mat(2, 1) << 0.005, 0.1).finished();

double control_rmse(const JointTrajectory& a, const JointTrajectory& b) {
  double sq = 0.0;
  for (std::size_t t = 0; t < a.controls.size(); ++t) sq += (a.controls[t] - b.controls[t]).squaredNorm();
  return std::sqrt(sq / static_cast<double>(a.controls.size()));
}

TEST(RefinerConfig, Validation) {
  RefinerConfig cfg;
  cfg.penalty_growth = 1.0;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = {};
  cfg.constraint_tol = 0.0;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = {};
  cfg.outer_iterations = 0;
  EXPECT_THROW(validate(cfg), ConfigError);
}

TEST(StackControls, RoundTrip) {
  std::mt19937_64 rng(1);
  const auto pp = assemble_potential(build_scenario(scenario_preset("head_on")));
  const auto u = testing::random_controls(pp, rng, 1.0);
  const Vec s = stack_controls(u);
  EXPECT_EQ(s.size(), 4 * 61);
  EXPECT_EQ(unstack_controls(s, 4), u);
}

// Property: the adjoint gradient matches central differences on random instances.
TEST(PotentialGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  for (const char* name : {"head_on", "obstacle_swap"}) {
    ScenarioConfig sc = scenario_preset(name);
    sc.horizon = 12;
    const auto pp = assemble_potential(build_scenario(sc));
    for (int trial = 0; trial < 3; ++trial) {
      const auto u = testing::random_controls(pp, rng, 0.2);
      const Vec grad = potential_gradient(pp, u);
      Vec s = stack_controls(u);
      for (Eigen::Index k = 0; k < s.size(); ++k) {
        const double h = 1e-6;
        Vec sp = s, sm = s;
        sp[k] += h;
        sm[k] -= h;
        const double fd = (eval_potential(pp, rollout(pp, pp.x0, unstack_controls(sp, 4))) -
                           eval_potential(pp, rollout(pp, pp.x0, unstack_controls(sm, 4)))) /
                          (2 * h);
        EXPECT_LE(std::abs(grad[k] - fd), std::max(1e-5, 1e-3 * std::abs(fd))) << name << " entry " << k;
      }
    }
  }
}

TEST(LagrangianGradient, AddsMultiplierTerms) {
  std::mt19937_64 rng(3);
  ScenarioConfig sc = scenario_preset("head_on");
  sc.horizon = 8;
  const auto pp = assemble_potential(build_scenario(sc));
  const auto u = testing::random_controls(pp, rng, 0.2);
  std::vector<Vec> lambda;
  for (int t = 0; t <= 8; ++t) lambda.push_back(testing::random_vec(rng, 7).cwiseAbs());
  const Vec grad = lagrangian_gradient(pp, u, lambda);
  auto lagrangian = [&](const std::vector<Vec>& controls) {
    const auto traj = rollout(pp, pp.x0, controls);
    double v = eval_potential(pp, traj);
    const auto g = eval_constraints(pp, traj);
    for (int t = 0; t <= 8; ++t) v += lambda[t].dot(g[t]);
    return v;
  };
  Vec s = stack_controls(u);
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    Vec sp = s, sm = s;
    sp[k] += 1e-6;
    sm[k] -= 1e-6;
    const double fd = (lagrangian(unstack_controls(sp, 4)) - lagrangian(unstack_controls(sm, 4))) / 2e-6;
    EXPECT_LE(std::abs(grad[k] - fd), std::max(1e-5, 1e-3 * std::abs(fd)));
  }
}

// The potential minimizer of an unconstrained linear problem is the Riccati optimum from any warm start.
// With no constraints this is also the posterior mode of the virtual model.
TEST(SolveConstrained, UnconstrainedLqMatchesRiccati) {
  std::mt19937_64 rng(4);
  const GameSpec g = testing::double_integrator_game();
  const auto pp = std::make_shared<const PotentialProblem>(assemble_potential(g));
  const auto optimum = testing::riccati_tracking(*pp, kA, kB);
  const auto vm = build_virtual_model(pp, Mat(0, 0));
  for (int trial = 0; trial < 5; ++trial) {
    const auto warm = rollout(*pp, pp->x0, testing::random_controls(*pp, rng, 3.0 * trial));
    const auto eq = solve_constrained(*pp, warm);
    EXPECT_TRUE(eq.converged);
    EXPECT_LE(testing::state_rmse(eq.trajectory, optimum), 1e-4);
    EXPECT_LE(control_rmse(eq.trajectory, optimum), 1e-4);
    EXPECT_LE(negative_log_posterior(vm, optimum), negative_log_posterior(vm, eq.trajectory) + 1e-9);
  }
}

TEST(SolveConstrained, FixedPointAtOptimum) {
  const GameSpec g = testing::double_integrator_game();
  const auto pp = assemble_potential(g);
  const auto optimum = testing::riccati_tracking(pp, kA, kB);
  const auto eq = solve_constrained(pp, optimum);
  EXPECT_TRUE(eq.converged);
  double worst = 0.0;
  for (std::size_t t = 0; t < optimum.controls.size(); ++t)
    worst = std::max(worst, (eq.trajectory.controls[t] - optimum.controls[t]).lpNorm<Eigen::Infinity>());
  EXPECT_LE(worst, 10 * RefinerConfig{}.stationarity_tol);
}

TEST(SolveConstrained, RejectsBadWarmStart) {
  const auto pp = assemble_potential(testing::double_integrator_game());
  JointTrajectory warm = testing::riccati_tracking(pp, kA, kB);
  warm.controls.pop_back();
  EXPECT_THROW(solve_constrained(pp, warm), ConfigError);
}

class HeadOnRefinement : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    game_ = new GameSpec(build_scenario(scenario_preset("head_on")));
    set_ = new EquilibriumSet(multinash_pf(*game_, {}));
  }
  static void TearDownTestSuite() {
    delete set_;
    delete game_;
  }
  static GameSpec* game_;
  static EquilibriumSet* set_;
};
GameSpec* HeadOnRefinement::game_ = nullptr;
EquilibriumSet* HeadOnRefinement::set_ = nullptr;

TEST_F(HeadOnRefinement, TwoFeasibleModesOnOppositeSides) {
  ASSERT_EQ(set_->modes.size(), 2u);
  const double a = set_->modes[0].trajectory.states[30][1];
  const double b = set_->modes[1].trajectory.states[30][1];
  EXPECT_LT(a * b, 0.0);
  for (const auto& eq : set_->modes) {
    EXPECT_TRUE(eq.converged);
    EXPECT_LE(eq.max_violation, 1e-4);
    for (double s : eq.stationarity) EXPECT_LE(s, 1e-5);
  }
}

TEST_F(HeadOnRefinement, MeritTraceIsMonotone) {
  for (const auto& eq : set_->modes) {
    EXPECT_TRUE(eq.merit_monotone);
    EXPECT_FALSE(eq.merit_trace.empty());
  }
}

// At a solution, a unilateral control change moves the potential by exactly the mover's cost change.
TEST_F(HeadOnRefinement, ExchangeabilityAtSolution) {
  std::mt19937_64 rng(5);
  const auto pp = assemble_potential(*game_);
  const auto blocks = agent_blocks(*game_);
  for (const auto& eq : set_->modes) {
    for (int i = 0; i < 2; ++i) {
      auto controls = eq.trajectory.controls;
      for (auto& u : controls) u.segment(blocks[i].input_offset, 2) += testing::random_vec(rng, 2, 0.01);
      const auto moved = rollout(pp, pp.x0, controls);
      const double dP = eval_potential(pp, moved) - eval_potential(pp, eq.trajectory);
      const double dJ = eval_agent_cost(*game_, moved, i) - eval_agent_cost(*game_, eq.trajectory, i);
      EXPECT_NEAR(dP, dJ, 1e-8 * eval_potential(pp, moved));
    }
  }
}

TEST_F(HeadOnRefinement, ModesAreMirrorImages) {
  ASSERT_EQ(set_->modes.size(), 2u);
  const auto pp = assemble_potential(*game_);
  const auto mirrored = reflect_trajectory(*game_, set_->modes[0].trajectory);
  const double p0 = set_->modes[0].potential;
  EXPECT_NEAR(eval_potential(pp, mirrored), p0, 1e-6 * p0);
  EXPECT_NEAR(set_->modes[1].potential, p0, 1e-6 * p0);
}

TEST_F(HeadOnRefinement, DedupKeepsOneCopy) {
  const auto blocks = agent_blocks(*game_);
  const auto& eq = set_->modes[0];
  EXPECT_EQ(dedup_equilibria({eq, eq}, blocks, 0.5).modes.size(), 1u);
  EXPECT_EQ(dedup_equilibria({set_->modes[1], eq}, blocks, 0.5).modes.size(), 2u);
  EXPECT_TRUE(dedup_equilibria({}, blocks, 0.5).modes.empty());
}

TEST(Dedup, KeepsLowestPotentialInBall) {
  const std::vector<AgentBlock> blocks{{0, 2, 0, 1}};
  auto make = [](double offset, double potential) {
    RefinedEquilibrium eq;
    for (int t = 0; t < 5; ++t) {
      eq.trajectory.states.push_back((Vec(2) << t, offset).finished());
      eq.trajectory.controls.push_back(Vec::Zero(1));
    }
    eq.potential = potential;
    return eq;
  };
  const auto out = dedup_equilibria({make(0.0, 5.0), make(0.3, 2.0), make(3.0, 9.0), make(-0.2, 4.0)}, blocks, 0.5);
  ASSERT_EQ(out.modes.size(), 2u);
  EXPECT_EQ(out.modes[0].potential, 2.0);
  EXPECT_EQ(out.modes[1].potential, 9.0);
}

TEST(Dedup, ObstacleSwapModesAllSurvive) {
  const GameSpec g = build_scenario(scenario_preset("obstacle_swap"));
  const auto set = multinash_pf(g, {});
  ASSERT_EQ(set.modes.size(), 6u);
  const auto blocks = agent_blocks(g);
  EXPECT_EQ(dedup_equilibria(set.modes, blocks, 0.5).modes.size(), 6u);
  for (std::size_t a = 0; a < set.modes.size(); ++a)
    for (std::size_t b = a + 1; b < set.modes.size(); ++b)
      EXPECT_GT(discrete_frechet(joint_position_polyline(set.modes[a].trajectory, blocks),
                                 joint_position_polyline(set.modes[b].trajectory, blocks)),
                0.5);
}

}  // namespace
}  // namespace nashmodes
