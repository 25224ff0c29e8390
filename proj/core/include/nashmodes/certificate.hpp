#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "nashmodes/game.hpp"
#include "nashmodes/refiner.hpp"

namespace nashmodes {

struct CertificateConfig {
  double radius = 0.5;             // eps, bound on the deviation's trajectory norm
  int samples = 200;               // K per agent
  double improvement_tol = 1e-4;   // delta_tol
  double stationarity_tol = 1e-4;
  double constraint_tol = 1e-4;    // eps_g for the feasibility precondition
  double fd_step = 1e-6;
  double active_threshold = 1e-3;  // constraints with g >= -threshold enter the multiplier fit
};

void validate(const CertificateConfig& cfg);

struct AgentCertificate {
  double cost = 0.0;
  double worst_improvement = 0.0;  // largest cost decrease over feasible samples (<= 0 when none improve)
  int feasible_samples = 0;
  double stationarity = 0.0;       // projected-gradient residual / (1 + |cost|)
  int active_constraints = 0;
};

struct GneCertificate {
  double radius = 0.0;
  int samples = 0;
  double improvement_tol = 0.0;
  double stationarity_tol = 0.0;
  double max_violation = 0.0;
  bool feasible = false;
  std::vector<AgentCertificate> agents;
  bool passed = false;
  std::string detail;  // first failing condition, empty when passed
};

/// Sampled unilateral-deviation test plus per-agent finite-difference stationarity.
/// A deviation is feasible when no constraint component exceeds max(0, its value at the
/// candidate), so slightly infeasible candidates are compared against equally infeasible moves.
GneCertificate check_local_gne(const GameSpec& game, const JointTrajectory& candidate, const CertificateConfig& cfg,
                               std::mt19937_64& rng);
GneCertificate check_local_gne(const GameSpec& game, const RefinedEquilibrium& eq, const CertificateConfig& cfg,
                               std::mt19937_64& rng);

/// Non-negative least squares min |A x - b| s.t. x >= 0 (Lawson-Hanson active set).
Vec nnls(const Mat& A, const Vec& b, int max_iterations = 0);

}  // namespace nashmodes
