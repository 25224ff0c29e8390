#pragma once

#include <string>
#include <vector>

#include "nashmodes/game.hpp"

namespace nashmodes {

struct RefinerConfig {
  int outer_iterations = 15;
  int inner_iterations = 100;
  double penalty_growth = 5.0;
  double penalty_init = 1000.0;
  double constraint_tol = 1e-4;     // eps_g
  double stationarity_tol = 1e-5;   // eps_grad, relative to the gradient scale (see stationarity_scale)
  double fd_step = 1e-6;
};

void validate(const RefinerConfig& cfg);

struct RefinedEquilibrium {
  JointTrajectory trajectory;
  double potential = 0.0;
  double max_violation = 0.0;
  std::vector<double> stationarity;  // per agent
  bool converged = false;
  int iterations = 0;                // total inner iterations
  int outer_iterations = 0;
  std::vector<Vec> multipliers;      // per time step, one entry per constraint
  std::vector<double> merit_trace;   // augmented-Lagrangian value after each outer iteration
  bool merit_monotone = true;
  int warm_start_id = -1;            // cluster or baseline draw that seeded the solve
};

struct StageTimings {
  double filter = 0.0;
  double cluster = 0.0;
  double refine = 0.0;
  double dedup = 0.0;

  double total() const { return filter + cluster + refine + dedup; }
};

struct EquilibriumSet {
  std::vector<RefinedEquilibrium> modes;  // ascending potential
  std::string scenario_hash;
  StageTimings timings;
  int clusters = 0;
  int refinements = 0;
  std::vector<std::string> diagnostics;
};

/// Gradient of the unconstrained potential with respect to the control sequence
/// (stacked u_0..u_tau), via the adjoint recursion.
Vec potential_gradient(const PotentialProblem& pp, const std::vector<Vec>& controls);

/// Gradient of potential + sum_t lambda_t' g_t with respect to the controls.
Vec lagrangian_gradient(const PotentialProblem& pp, const std::vector<Vec>& controls,
                        const std::vector<Vec>& multipliers);

/// Scale used to make stationarity residuals dimensionless: 1 + |potential|.
double stationarity_scale(double potential);

/// Local minimizer of the potential problem reachable from the warm start's controls.
RefinedEquilibrium solve_constrained(const PotentialProblem& pp, const JointTrajectory& warm_start,
                                     const RefinerConfig& cfg = {});

/// Dynamically consistent trajectory that follows the guide's states (an unconstrained
/// tracking solve with the guide as reference). Used to turn coarse filter output into
/// controls before refinement.
JointTrajectory track_guide(const PotentialProblem& pp, const JointTrajectory& guide, int iterations = 60);

/// Greedy duplicate removal: visits equilibria by ascending potential and keeps one unless
/// its joint-position Frechet distance to a kept one is <= min_distance.
EquilibriumSet dedup_equilibria(const std::vector<RefinedEquilibrium>& eqs, const std::vector<AgentBlock>& blocks,
                                double min_distance);

/// Stacks controls into one vector and back.
Vec stack_controls(const std::vector<Vec>& controls);
std::vector<Vec> unstack_controls(const Vec& stacked, int input_dim);

}  // namespace nashmodes
