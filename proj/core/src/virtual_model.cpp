#include "nashmodes/virtual_model.hpp"

#include <cmath>

#include "nashmodes/errors.hpp"

namespace nashmodes {

double softplus_barrier(double g, double alpha) {
  // ln(1 + e^g) = max(g, 0) + ln(1 + e^-|g|)
  return (std::max(g, 0.0) + std::log1p(std::exp(-std::abs(g)))) / alpha;
}

Vec softplus_barrier(const Vec& g, double alpha) {
  Vec out(g.size());
  for (Eigen::Index k = 0; k < g.size(); ++k) out[k] = softplus_barrier(g[k], alpha);
  return out;
}

double softplus_barrier_derivative(double g, double alpha) {
  const double s = g >= 0 ? 1.0 / (1.0 + std::exp(-g)) : std::exp(g) / (1.0 + std::exp(g));
  return s / alpha;
}

Vec VirtualModel::transition(const VecView& xbar) const {
  const int n = state_dim();
  const int m = input_dim();
  Vec out = Vec::Zero(n + m);
  out.head(n) = problem->dynamics->step(xbar.head(n), xbar.tail(m), problem->dt);
  return out;
}

Vec VirtualModel::measurement(const VecView& xbar) const {
  const int n = state_dim();
  const int m = input_dim();
  const int c = constraint_dim();
  Vec out(n + c);
  out.head(n) = xbar.head(n);
  if (c > 0) out.tail(c) = softplus_barrier(problem->constraints->eval(xbar.head(n), xbar.tail(m)), barrier.alpha);
  return out;
}

Mat weight_to_covariance(const Mat& W) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (W + W.transpose()));
  const auto& ev = es.eigenvalues();
  const double tol = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() > tol) return W.inverse();
  Vec inv = Vec::Zero(ev.size());
  for (Eigen::Index k = 0; k < ev.size(); ++k)
    if (ev[k] > tol) inv[k] = 1.0 / ev[k];
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose() +
         1e-8 * Mat::Identity(W.rows(), W.cols());
}

Mat default_slack_weight(int constraint_dim) { return 20000.0 * Mat::Identity(constraint_dim, constraint_dim); }

VirtualModel build_virtual_model(std::shared_ptr<const PotentialProblem> pp, const Mat& Q_eta,
                                 const BarrierConfig& barrier) {
  if (!pp) throw ConfigError("virtual model needs a potential problem");
  if (!(barrier.alpha > 0)) throw ConfigError("barrier alpha must be positive");
  const int n = pp->state_dim();
  const int c = pp->constraint_dim();
  if (Q_eta.rows() != c || Q_eta.cols() != c) throw ConfigError("slack weight must be c x c");

  Eigen::LLT<Mat> r_llt(pp->R);
  if (r_llt.info() != Eigen::Success) throw ConfigError("control weight R is singular or indefinite");
  Mat eta_cov(c, c);
  if (c > 0) {
    Eigen::LLT<Mat> eta_llt(Q_eta);
    if (eta_llt.info() != Eigen::Success) throw ConfigError("slack weight Q_eta is singular or indefinite");
    eta_cov = Q_eta.inverse();
  }

  VirtualModel vm;
  vm.problem = pp;
  vm.barrier = barrier;
  vm.Q_eta = Q_eta;
  vm.Qbar = block_diagonal({weight_to_covariance(pp->Q), eta_cov});
  vm.Qbar_tau = block_diagonal({weight_to_covariance(pp->Qtau), eta_cov});
  vm.Rbar = block_diagonal({Mat::Zero(n, n), pp->R.inverse()});
  vm.Qbar_chol = Eigen::LLT<Mat>(vm.Qbar).matrixL();
  vm.Qbar_tau_chol = Eigen::LLT<Mat>(vm.Qbar_tau).matrixL();
  vm.targets.reserve(pp->horizon + 1);
  for (const auto& ref : pp->reference) {
    Vec y = Vec::Zero(n + c);
    y.head(n) = ref;
    vm.targets.push_back(std::move(y));
  }
  return vm;
}

double negative_log_posterior(const VirtualModel& vm, const JointTrajectory& traj) {
  const auto& pp = *vm.problem;
  const int tau = pp.horizon;
  if (traj.horizon() != tau || static_cast<int>(traj.controls.size()) != tau + 1)
    throw ConfigError("trajectory length does not match the virtual model horizon");
  const int c = pp.constraint_dim();
  double total = 0.0;
  for (int t = 0; t <= tau; ++t) {
    const Vec v = pp.reference[t] - traj.states[t];
    total += weighted_sq_norm(v, t == tau ? pp.Qtau : pp.Q);
    // u_t is the process noise of the previous step (u_0 is drawn the same way).
    total += weighted_sq_norm(traj.controls[t], pp.R);
    if (c > 0) {
      const Vec eta = -softplus_barrier(pp.constraints->eval(traj.states[t], traj.controls[t]), vm.barrier.alpha);
      total += weighted_sq_norm(eta, vm.Q_eta);
    }
  }
  return total;
}

}  // namespace nashmodes
