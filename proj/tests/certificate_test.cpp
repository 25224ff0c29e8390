#include <gtest/gtest.h>

#include <limits>
#include <random>

#include "nashmodes/certificate.hpp"
#include "nashmodes/errors.hpp"
#include "nashmodes/planner.hpp"
#include "nashmodes/scenarios.hpp"
#include "support.hpp"

namespace nashmodes {
namespace {

// Least squares over every support subset; the best non-negative candidate is the NNLS optimum.
double brute_force_nnls_residual(const Mat& A, const Vec& b) {
  const int n = static_cast<int>(A.cols());
  double best = b.norm();
  for (int mask = 1; mask < (1 << n); ++mask) {
    std::vector<int> idx;
    for (int j = 0; j < n; ++j)
      if (mask & (1 << j)) idx.push_back(j);
    Mat As(A.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) As.col(static_cast<Eigen::Index>(k)) = A.col(idx[k]);
    const Vec xs = As.completeOrthogonalDecomposition().solve(b);
    if ((xs.array() < 0).any()) continue;
    best = std::min(best, (As * xs - b).norm());
  }
  return best;
}

TEST(Nnls, MatchesSubsetEnumeration) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 200; ++trial) {
    const int rows = 3 + trial % 5, cols = 1 + trial % 5;
    const Mat A = Mat::NullaryExpr(rows, cols, [&] { return normal(rng); });
    const Vec b = testing::random_vec(rng, rows);
    const Vec x = nnls(A, b);
    EXPECT_GE(x.minCoeff(), 0.0);
    EXPECT_NEAR((A * x - b).norm(), brute_force_nnls_residual(A, b), 1e-9);
  }
}

TEST(Nnls, KnownSolutions) {
  const Mat I = Mat::Identity(3, 3);
  EXPECT_EQ(nnls(I, (Vec(3) << 1, -2, 3).finished()), (Vec(3) << 1, 0, 3).finished());
  EXPECT_EQ(nnls(Mat(2, 0), Vec::Ones(2)).size(), 0);
}

TEST(CertificateConfig, Validation) {
  CertificateConfig cfg;
  cfg.radius = 0;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = {};
  cfg.samples = -1;
  EXPECT_THROW(validate(cfg), ConfigError);
}

class ScenarioCertificates : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    head_on_ = new GameSpec(build_scenario(scenario_preset("head_on")));
    head_on_set_ = new EquilibriumSet(multinash_pf(*head_on_, {}));
  }
  static void TearDownTestSuite() {
    delete head_on_set_;
    delete head_on_;
  }
  static GameSpec* head_on_;
  static EquilibriumSet* head_on_set_;
};
GameSpec* ScenarioCertificates::head_on_ = nullptr;
EquilibriumSet* ScenarioCertificates::head_on_set_ = nullptr;

TEST_F(ScenarioCertificates, HeadOnModesPass) {
  ASSERT_EQ(head_on_set_->modes.size(), 2u);
  std::mt19937_64 rng(7);
  for (const auto& eq : head_on_set_->modes) {
    const auto cert = check_local_gne(*head_on_, eq, {}, rng);
    EXPECT_TRUE(cert.passed) << cert.detail;
    EXPECT_TRUE(cert.feasible);
    ASSERT_EQ(cert.agents.size(), 2u);
    for (const auto& a : cert.agents) {
      EXPECT_GT(a.feasible_samples, 0);
      EXPECT_LE(a.worst_improvement, 1e-4);
    }
  }
}

TEST_F(ScenarioCertificates, TamperedTrajectoryFails) {
  auto tampered = head_on_set_->modes.at(0).trajectory;
  for (int t = 20; t < 40; ++t) tampered.controls[t][0] += 0.2;
  std::mt19937_64 rng(8);
  const auto cert = check_local_gne(*head_on_, tampered, {}, rng);
  EXPECT_FALSE(cert.passed);
  EXPECT_GT(cert.agents[0].worst_improvement, 1e-2);
  EXPECT_FALSE(cert.detail.empty());
}

TEST_F(ScenarioCertificates, SeedReproducible) {
  std::mt19937_64 a(3), b(3);
  CertificateConfig cfg;
  cfg.samples = 20;
  const auto ca = check_local_gne(*head_on_, head_on_set_->modes[0], cfg, a);
  const auto cb = check_local_gne(*head_on_, head_on_set_->modes[0], cfg, b);
  for (int i = 0; i < 2; ++i) EXPECT_EQ(ca.agents[i].worst_improvement, cb.agents[i].worst_improvement);
}

TEST_F(ScenarioCertificates, RejectsWrongHorizon) {
  auto traj = head_on_set_->modes[0].trajectory;
  traj.states.pop_back();
  traj.controls.pop_back();
  std::mt19937_64 rng(0);
  EXPECT_THROW(check_local_gne(*head_on_, traj, {}, rng), ConfigError);
}

TEST(Certificate, ObstacleSwapModesPass) {
  const GameSpec g = build_scenario(scenario_preset("obstacle_swap"));
  const auto set = multinash_pf(g, {});
  ASSERT_EQ(set.modes.size(), 6u);
  std::mt19937_64 rng(9);
  for (const auto& eq : set.modes) {
    const auto cert = check_local_gne(g, eq, {}, rng);
    EXPECT_TRUE(cert.passed) << cert.detail;
  }
}

TEST(Certificate, SingleAgentLqOptimum) {
  const GameSpec g = testing::double_integrator_game();
  const auto pp = assemble_potential(g);
  const auto optimum = testing::riccati_tracking(pp, (Mat(2, 2) << 1, 0.1, 0, 1).finished(),
                                                 (Mat(2, 1) << 0.005, 0.1).finished());
  std::mt19937_64 rng(10);
  const auto cert = check_local_gne(g, optimum, {}, rng);
  EXPECT_TRUE(cert.passed) << cert.detail;
  EXPECT_LE(cert.agents[0].stationarity, 1e-5);
  EXPECT_EQ(cert.agents[0].active_constraints, 0);
  EXPECT_EQ(cert.agents[0].feasible_samples, 200);
}

}  // namespace
}  // namespace nashmodes
