#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "nashmodes/frechet.hpp"
#include "nashmodes/game.hpp"
#include "nashmodes/planner.hpp"
#include "nashmodes/scenarios.hpp"

namespace nashmodes::testing {

/// One-dimensional double integrator tracking a ramp: x = (position, velocity), u = acceleration.
inline GameSpec double_integrator_game(int horizon = 30, double dt = 0.1, double q_scale = 1.0) {
  AgentSpec a;
  a.name = "di";
  a.state_dim = 2;
  a.input_dim = 1;
  a.Q = q_scale * Vec((Vec(2) << 400.0, 40.0).finished()).asDiagonal();
  a.Qtau = 100.0 * a.Q;
  a.R = q_scale * Mat::Constant(1, 1, 40.0);
  a.dynamics_id = "linear";
  a.dynamics_params["A"] = {1.0, dt, 0.0, 1.0};
  a.dynamics_params["B"] = {0.5 * dt * dt, dt};
  for (int t = 0; t <= horizon; ++t) a.reference.push_back((Vec(2) << 1.0 * t * dt, 1.0).finished());
  GameSpec g;
  g.agents.push_back(a);
  g.horizon = horizon;
  g.dt = dt;
  g.x0 = Vec::Zero(2);
  return g;
}

/// Exact minimizer of an unconstrained linear tracking problem by the backward Riccati
/// recursion with an affine term; the final control only enters the cost and is zero.
inline JointTrajectory riccati_tracking(const PotentialProblem& pp, const Mat& A, const Mat& B) {
  const int tau = pp.horizon;
  std::vector<Mat> K(tau);
  std::vector<Vec> k(tau);
  Mat P = pp.Qtau;
  Vec p = pp.Qtau * pp.reference[tau];
  for (int t = tau - 1; t >= 0; --t) {
    const Mat S = pp.R + B.transpose() * P * B;
    const Eigen::LDLT<Mat> s(S);
    K[t] = s.solve(B.transpose() * P * A);
    k[t] = s.solve(B.transpose() * p);
    const Mat Acl = A - B * K[t];
    p = pp.Q * pp.reference[t] + Acl.transpose() * p;
    P = pp.Q + A.transpose() * P * Acl;
    P = 0.5 * (P + P.transpose());
  }
  JointTrajectory out;
  Vec x = pp.x0;
  for (int t = 0; t <= tau; ++t) {
    out.states.push_back(x);
    const Vec u = t < tau ? Vec(-K[t] * x + k[t]) : Vec::Zero(pp.input_dim());
    out.controls.push_back(u);
    if (t < tau) x = A * x + B * u;
  }
  return out;
}

inline double state_rmse(const JointTrajectory& a, const JointTrajectory& b) {
  double sq = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < a.states.size(); ++t) {
    sq += (a.states[t] - b.states[t]).squaredNorm();
    count += static_cast<std::size_t>(a.states[t].size());
  }
  return std::sqrt(sq / static_cast<double>(count));
}

inline std::vector<Vec> random_controls(const PotentialProblem& pp, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<Vec> u(pp.horizon + 1, Vec::Zero(pp.input_dim()));
  for (auto& v : u)
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = normal(rng);
  return u;
}

inline Vec random_vec(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vec v(n);
  for (int k = 0; k < n; ++k) v[k] = normal(rng);
  return v;
}

inline Mat random_spd(std::mt19937_64& rng, int n, double floor = 0.5) {
  Mat M(n, n);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = normal(rng);
  return M * M.transpose() + floor * Mat::Identity(n, n);
}

inline double rel_err(const Mat& a, const Mat& b) { return (a - b).norm() / std::max(1e-300, b.norm()); }

struct KalmanStep {
  Vec mean;
  Mat cov;
};

// Textbook Kalman filter step on the linear virtual system: x' = F x + noise(Rbar), y = H x + noise(Qbar).
inline KalmanStep kalman_oracle(const Vec& latest, const Mat& cov, const Mat& A, const Mat& B, const Mat& Rbar,
                                const Mat& meas_cov, const Vec& target, double jitter) {
  const int n = static_cast<int>(A.rows()), m = static_cast<int>(B.cols());
  Mat F = Mat::Zero(n + m, n + m);
  F.topLeftCorner(n, n) = A;
  F.topRightCorner(n, m) = B;
  Mat H = Mat::Zero(n, n + m);
  H.leftCols(n).setIdentity();
  const Vec mp = F * latest;
  Mat P = F * cov * F.transpose() + Rbar;
  P.topLeftCorner(n, n).diagonal().array() += jitter;
  const Mat S = H * P * H.transpose() + meas_cov;
  const Mat K = P * H.transpose() * S.inverse();
  return {mp + K * (target - H * mp), P - K * S * K.transpose()};
}

inline Polyline random_polyline(std::mt19937_64& rng, int points, int dim = 2) {
  Polyline p;
  for (int k = 0; k < points; ++k) p.push_back(testing::random_vec(rng, dim));
  return p;
}

// Enumerates every monotone coupling path from (0, 0) to the last pair, no memoization.
inline void enumerate_couplings(const Polyline& a, const Polyline& b, std::size_t i, std::size_t j, double running, double& best) {
  running = std::max(running, (a[i] - b[j]).norm());
  if (i + 1 == a.size() && j + 1 == b.size()) {
    best = std::min(best, running);
    return;
  }
  if (i + 1 < a.size()) enumerate_couplings(a, b, i + 1, j, running, best);
  if (j + 1 < b.size()) enumerate_couplings(a, b, i, j + 1, running, best);
  if (i + 1 < a.size() && j + 1 < b.size()) enumerate_couplings(a, b, i + 1, j + 1, running, best);
}

inline double brute_force_frechet(const Polyline& a, const Polyline& b) {
  double best = std::numeric_limits<double>::infinity();
  enumerate_couplings(a, b, 0, 0, 0.0, best);
  return best;
}

}  // namespace nashmodes::testing
