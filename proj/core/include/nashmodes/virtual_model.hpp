#pragma once

#include <memory>
#include <vector>

#include "nashmodes/game.hpp"

namespace nashmodes {

struct BarrierConfig {
  double alpha = 5.0;  // strictness; output scale of the softplus
};

/// (1/alpha) * ln(1 + exp(g)), componentwise and overflow-safe.
double softplus_barrier(double g, double alpha);
Vec softplus_barrier(const Vec& g, double alpha);

/// Derivative of softplus_barrier with respect to g.
double softplus_barrier_derivative(double g, double alpha);

/// Virtual state-space system over augmented states [x; u] whose posterior mode
/// coincides with the soft-constrained potential problem.
struct VirtualModel {
  std::shared_ptr<const PotentialProblem> problem;
  BarrierConfig barrier;
  Mat Q_eta;        // c x c slack weight
  Mat Qbar;         // blkdiag(Q^-1, Q_eta^-1)
  Mat Qbar_tau;     // blkdiag(Qtau^-1, Q_eta^-1)
  Mat Rbar;         // blkdiag(0_n, R^-1)
  std::vector<Vec> targets;  // [xhat_t; 0_c]
  Mat Qbar_chol;             // lower Cholesky factors of the measurement covariances
  Mat Qbar_tau_chol;

  int state_dim() const { return problem->state_dim(); }
  int input_dim() const { return problem->input_dim(); }
  int constraint_dim() const { return problem->constraint_dim(); }
  int augmented_dim() const { return state_dim() + input_dim(); }
  int measurement_dim() const { return state_dim() + constraint_dim(); }
  int horizon() const { return problem->horizon; }

  /// [f(x, u); 0_m]
  Vec transition(const VecView& xbar) const;
  /// [x; psi(g(x, u))]
  Vec measurement(const VecView& xbar) const;
};

/// Inverse of a PSD weight; pseudoinverse plus 1e-8 jitter when singular.
Mat weight_to_covariance(const Mat& W);

VirtualModel build_virtual_model(std::shared_ptr<const PotentialProblem> pp, const Mat& Q_eta,
                                 const BarrierConfig& barrier = {});

/// Default slack weight 2e4 * I_c.
Mat default_slack_weight(int constraint_dim);

/// Soft-constrained objective evaluated on a trajectory, without Gaussian normalizers.
double negative_log_posterior(const VirtualModel& vm, const JointTrajectory& traj);

}  // namespace nashmodes
