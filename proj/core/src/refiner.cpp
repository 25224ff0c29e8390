#include "nashmodes/refiner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nashmodes/errors.hpp"
#include "nashmodes/frechet.hpp"

namespace nashmodes {

namespace {

struct Linearization {
  std::vector<Mat> A, B;    // dynamics, t = 0..tau-1
  std::vector<Mat> Gx, Gu;  // constraints, t = 0..tau
  std::vector<Vec> g;
};

struct Multipliers {
  std::vector<Vec> lambda;
  double mu = 1.0;
};

double al_term(double g, double lambda, double mu) {
  const double a = std::max(0.0, lambda + mu * g);
  return (a * a - lambda * lambda) / (2.0 * mu);
}

void linearize(const PotentialProblem& pp, const JointTrajectory& traj, Linearization& lin) {
  const int tau = pp.horizon;
  lin.A.resize(tau);
  lin.B.resize(tau);
  lin.Gx.resize(tau + 1);
  lin.Gu.resize(tau + 1);
  lin.g.resize(tau + 1);
  for (int t = 0; t < tau; ++t) pp.dynamics->linearize(traj.states[t], traj.controls[t], pp.dt, lin.A[t], lin.B[t]);
  for (int t = 0; t <= tau; ++t) {
    lin.g[t] = pp.constraints->eval(traj.states[t], traj.controls[t]);
    pp.constraints->jacobian(traj.states[t], traj.controls[t], lin.Gx[t], lin.Gu[t]);
  }
}

double merit(const PotentialProblem& pp, const JointTrajectory& traj, const Multipliers& al) {
  double value = eval_potential(pp, traj);
  if (pp.constraint_dim() == 0) return value;
  for (int t = 0; t <= pp.horizon; ++t) {
    const Vec g = pp.constraints->eval(traj.states[t], traj.controls[t]);
    for (Eigen::Index k = 0; k < g.size(); ++k) value += al_term(g[k], al.lambda[t][k], al.mu);
  }
  return value;
}

/// Active-set weights a_k = max(0, lambda_k + mu g_k).
Vec active_weights(const Vec& g, const Vec& lambda, double mu) {
  return (lambda + mu * g).cwiseMax(0.0);
}

/// Adjoint gradient of the augmented Lagrangian with respect to the stacked controls.
Vec al_gradient(const PotentialProblem& pp, const JointTrajectory& traj, const Linearization& lin,
                const Multipliers& al) {
  const int tau = pp.horizon;
  const int m = pp.input_dim();
  const int c = pp.constraint_dim();
  Vec grad(m * (tau + 1));
  Vec costate;
  for (int t = tau; t >= 0; --t) {
    const Mat& W = t == tau ? pp.Qtau : pp.Q;
    Vec lx = 2.0 * W * (traj.states[t] - pp.reference[t]);
    Vec lu = 2.0 * pp.R * traj.controls[t];
    if (c > 0) {
      const Vec a = active_weights(lin.g[t], al.lambda[t], al.mu);
      lx.noalias() += lin.Gx[t].transpose() * a;
      lu.noalias() += lin.Gu[t].transpose() * a;
    }
    if (t < tau) {
      lu.noalias() += lin.B[t].transpose() * costate;
      lx.noalias() += lin.A[t].transpose() * costate;
    }
    grad.segment(t * m, m) = lu;
    costate = std::move(lx);
  }
  return grad;
}

struct InnerResult {
  JointTrajectory traj;
  Vec gradient;
  int iterations = 0;
  bool monotone = true;
};

/// Gauss-Newton descent on the augmented Lagrangian: Riccati backward pass for the
/// search direction, closed-loop rollout with backtracking along the step length.
InnerResult minimize_al(const PotentialProblem& pp, JointTrajectory traj, const Multipliers& al, int max_iters,
                        double rel_tol) {
  const int tau = pp.horizon;
  const int n = pp.state_dim();
  const int m = pp.input_dim();
  const int c = pp.constraint_dim();

  Linearization lin;
  std::vector<Vec> k(tau + 1);
  std::vector<Mat> K(tau + 1);
  std::vector<Vec> Qu(tau + 1);
  std::vector<Mat> Quu(tau + 1);
  double reg = 1e-6;
  double current = merit(pp, traj, al);

  InnerResult out;
  for (int iter = 0; iter < max_iters; ++iter) {
    linearize(pp, traj, lin);
    out.gradient = al_gradient(pp, traj, lin, al);
    const double scale = stationarity_scale(current);
    if (out.gradient.lpNorm<Eigen::Infinity>() <= rel_tol * scale) break;

    // Backward pass; retried with stronger regularization when Quu is not positive definite.
    bool backward_ok = false;
    while (!backward_ok) {
      Vec Vx = Vec::Zero(n);
      Mat Vxx = Mat::Zero(n, n);
      backward_ok = true;
      for (int t = tau; t >= 0; --t) {
        const Mat& W = t == tau ? pp.Qtau : pp.Q;
        Vec lx = 2.0 * W * (traj.states[t] - pp.reference[t]);
        Vec lu = 2.0 * pp.R * traj.controls[t];
        Mat lxx = 2.0 * W;
        Mat luu = 2.0 * pp.R;
        Mat lux = Mat::Zero(m, n);
        if (c > 0) {
          const Vec a = active_weights(lin.g[t], al.lambda[t], al.mu);
          lx.noalias() += lin.Gx[t].transpose() * a;
          lu.noalias() += lin.Gu[t].transpose() * a;
          for (int j = 0; j < c; ++j) {
            if (a[j] <= 0) continue;
            const auto gx = lin.Gx[t].row(j);
            const auto gu = lin.Gu[t].row(j);
            lxx.noalias() += al.mu * gx.transpose() * gx;
            luu.noalias() += al.mu * gu.transpose() * gu;
            lux.noalias() += al.mu * gu.transpose() * gx;
          }
        }
        Vec qx = lx, qu = lu;
        Mat qxx = lxx, quu = luu, qux = lux;
        if (t < tau) {
          const Mat& A = lin.A[t];
          const Mat& B = lin.B[t];
          qx.noalias() += A.transpose() * Vx;
          qu.noalias() += B.transpose() * Vx;
          const Mat VxxA = Vxx * A;
          qxx.noalias() += A.transpose() * VxxA;
          quu.noalias() += B.transpose() * Vxx * B;
          qux.noalias() += B.transpose() * VxxA;
        }
        Mat quu_reg = quu;
        quu_reg.diagonal().array() += reg;
        Eigen::LLT<Mat> llt(quu_reg);
        if (llt.info() != Eigen::Success) {
          reg = std::max(reg * 10.0, 1e-8);
          if (reg > 1e10) throw NumericError("refiner regularization diverged", t);
          backward_ok = false;
          break;
        }
        k[t] = -llt.solve(qu);
        K[t] = -llt.solve(qux);
        Qu[t] = qu;
        Quu[t] = quu;
        Vx = qx + K[t].transpose() * quu * k[t] + K[t].transpose() * qu + qux.transpose() * k[t];
        Vxx = qxx + K[t].transpose() * quu * K[t] + K[t].transpose() * qux + qux.transpose() * K[t];
        Vxx = 0.5 * (Vxx + Vxx.transpose());
      }
    }

    double d1 = 0.0, d2 = 0.0;
    for (int t = 0; t <= tau; ++t) {
      d1 += k[t].dot(Qu[t]);
      d2 += k[t].dot(Quu[t] * k[t]);
    }
    if (-d1 < 1e-15 * (1.0 + std::abs(current))) break;

    bool accepted = false;
    for (double step = 1.0; step > 1e-6; step *= 0.5) {
      JointTrajectory trial;
      trial.states.resize(tau + 1);
      trial.controls.resize(tau + 1);
      trial.states[0] = pp.x0;
      bool finite = true;
      for (int t = 0; t <= tau; ++t) {
        trial.controls[t] = traj.controls[t] + step * k[t] + K[t] * (trial.states[t] - traj.states[t]);
        if (t < tau) {
          trial.states[t + 1] = pp.dynamics->step(trial.states[t], trial.controls[t], pp.dt);
          if (!trial.states[t + 1].allFinite()) {
            finite = false;
            break;
          }
        }
      }
      if (!finite) continue;
      const double value = merit(pp, trial, al);
      const double expected = step * d1 + 0.5 * step * step * d2;
      if (std::isfinite(value) && value < current && current - value >= 1e-4 * (-expected)) {
        traj = std::move(trial);
        current = value;
        accepted = true;
        break;
      }
    }
    out.iterations = iter + 1;
    if (accepted) {
      reg = std::max(reg / 10.0, 1e-9);
    } else {
      reg *= 10.0;
      if (reg > 1e8) break;
    }
  }
  linearize(pp, traj, lin);
  out.gradient = al_gradient(pp, traj, lin, al);
  out.traj = std::move(traj);
  return out;
}

std::vector<double> per_agent_residuals(const PotentialProblem& pp, const Vec& gradient, double potential) {
  const int m = pp.input_dim();
  const int steps = static_cast<int>(gradient.size()) / m;
  std::vector<double> out;
  for (const auto& b : pp.blocks) {
    double worst = 0.0;
    for (int t = 0; t < steps; ++t)
      worst = std::max(worst, gradient.segment(t * m + b.input_offset, b.input_dim).lpNorm<Eigen::Infinity>());
    out.push_back(worst / stationarity_scale(potential));
  }
  return out;
}

}  // namespace

void validate(const RefinerConfig& cfg) {
  if (cfg.outer_iterations < 1 || cfg.inner_iterations < 1) throw ConfigError("refiner iteration budgets must be >= 1");
  if (!(cfg.penalty_growth > 1)) throw ConfigError("penalty growth must exceed 1");
  if (!(cfg.penalty_init > 0)) throw ConfigError("initial penalty must be positive");
  if (!(cfg.constraint_tol > 0) || !(cfg.stationarity_tol > 0) || !(cfg.fd_step > 0))
    throw ConfigError("refiner tolerances must be positive");
}

double stationarity_scale(double potential) { return 1.0 + std::abs(potential); }

Vec stack_controls(const std::vector<Vec>& controls) {
  if (controls.empty()) return Vec(0);
  const Eigen::Index m = controls.front().size();
  Vec out(m * static_cast<Eigen::Index>(controls.size()));
  for (std::size_t t = 0; t < controls.size(); ++t) out.segment(static_cast<Eigen::Index>(t) * m, m) = controls[t];
  return out;
}

std::vector<Vec> unstack_controls(const Vec& stacked, int input_dim) {
  std::vector<Vec> out(stacked.size() / input_dim);
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = stacked.segment(static_cast<Eigen::Index>(t) * input_dim, input_dim);
  return out;
}

Vec lagrangian_gradient(const PotentialProblem& pp, const std::vector<Vec>& controls,
                        const std::vector<Vec>& multipliers) {
  const auto traj = rollout(pp, pp.x0, controls);
  Linearization lin;
  linearize(pp, traj, lin);
  // With mu -> 0 the active weights reduce to the multipliers themselves.
  Multipliers al;
  al.mu = 1e-300;
  al.lambda = multipliers;
  if (al.lambda.empty()) al.lambda.assign(pp.horizon + 1, Vec::Zero(pp.constraint_dim()));
  const int tau = pp.horizon;
  const int m = pp.input_dim();
  const int c = pp.constraint_dim();
  Vec grad(m * (tau + 1));
  Vec costate;
  for (int t = tau; t >= 0; --t) {
    const Mat& W = t == tau ? pp.Qtau : pp.Q;
    Vec lx = 2.0 * W * (traj.states[t] - pp.reference[t]);
    Vec lu = 2.0 * pp.R * traj.controls[t];
    if (c > 0) {
      lx.noalias() += lin.Gx[t].transpose() * al.lambda[t];
      lu.noalias() += lin.Gu[t].transpose() * al.lambda[t];
    }
    if (t < tau) {
      lu.noalias() += lin.B[t].transpose() * costate;
      lx.noalias() += lin.A[t].transpose() * costate;
    }
    grad.segment(t * m, m) = lu;
    costate = std::move(lx);
  }
  return grad;
}

Vec potential_gradient(const PotentialProblem& pp, const std::vector<Vec>& controls) {
  std::vector<Vec> zero(pp.horizon + 1, Vec::Zero(pp.constraint_dim()));
  return lagrangian_gradient(pp, controls, zero);
}

RefinedEquilibrium solve_constrained(const PotentialProblem& pp, const JointTrajectory& warm_start,
                                     const RefinerConfig& cfg) {
  validate(cfg);
  if (static_cast<int>(warm_start.controls.size()) != pp.horizon + 1)
    throw ConfigError("warm start must carry horizon + 1 controls");
  for (const auto& u : warm_start.controls)
    if (u.size() != pp.input_dim()) throw ConfigError("warm start control has wrong dimension");

  const int c = pp.constraint_dim();
  JointTrajectory traj = rollout(pp, pp.x0, warm_start.controls);

  Multipliers al;
  al.mu = cfg.penalty_init;
  al.lambda.assign(pp.horizon + 1, Vec::Zero(c));

  RefinedEquilibrium out;
  double prev_violation = std::numeric_limits<double>::infinity();
  Vec gradient;
  for (int outer = 0; outer < cfg.outer_iterations; ++outer) {
    auto inner = minimize_al(pp, std::move(traj), al, cfg.inner_iterations, cfg.stationarity_tol);
    traj = std::move(inner.traj);
    gradient = std::move(inner.gradient);
    out.iterations += inner.iterations;
    out.outer_iterations = outer + 1;
    out.merit_monotone = out.merit_monotone && inner.monotone;
    out.merit_trace.push_back(merit(pp, traj, al));

    const double potential = eval_potential(pp, traj);
    if (!std::isfinite(potential)) throw NumericError("refiner objective became non-finite");

    double violation = 0.0;
    if (c > 0) {
      for (int t = 0; t <= pp.horizon; ++t) {
        const Vec g = pp.constraints->eval(traj.states[t], traj.controls[t]);
        violation = std::max(violation, g.maxCoeff());
        al.lambda[t] = active_weights(g, al.lambda[t], al.mu);
      }
    }
    const double stationarity = gradient.lpNorm<Eigen::Infinity>() / stationarity_scale(potential);
    if (violation <= cfg.constraint_tol && stationarity <= cfg.stationarity_tol) {
      out.converged = true;
      break;
    }
    if (violation > cfg.constraint_tol && violation > 0.25 * prev_violation) al.mu *= cfg.penalty_growth;
    prev_violation = violation;
  }

  out.potential = eval_potential(pp, traj);
  out.max_violation = c > 0 ? max_constraint_violation(pp, traj) : 0.0;
  out.stationarity = per_agent_residuals(pp, gradient, out.potential);
  out.multipliers = al.lambda;
  out.trajectory = std::move(traj);
  return out;
}

EquilibriumSet dedup_equilibria(const std::vector<RefinedEquilibrium>& eqs, const std::vector<AgentBlock>& blocks,
                                double min_distance) {
  std::vector<std::size_t> order(eqs.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return eqs[a].potential < eqs[b].potential; });
  EquilibriumSet out;
  std::vector<Polyline> kept;
  for (std::size_t k : order) {
    Polyline line = joint_position_polyline(eqs[k].trajectory, blocks);
    bool duplicate = false;
    for (const auto& other : kept) {
      if (discrete_frechet(line, other) <= min_distance) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) continue;
    kept.push_back(std::move(line));
    out.modes.push_back(eqs[k]);
  }
  return out;
}

JointTrajectory track_guide(const PotentialProblem& pp, const JointTrajectory& guide, int iterations) {
  if (guide.horizon() != pp.horizon) throw ConfigError("guide horizon does not match the problem");
  PotentialProblem tracking = pp;
  tracking.reference = guide.states;
  RefinerConfig cfg;
  cfg.inner_iterations = iterations;
  cfg.outer_iterations = 6;
  cfg.constraint_tol = 1e-2;
  cfg.stationarity_tol = 1e-4;
  // A soft start lets the tracking solve settle into the guide's corridor before the
  // penalty grows.
  cfg.penalty_init = 10.0;
  // The guide's own controls are sampled noise; rolling them out drifts far from its states.
  const std::vector<Vec> zero(pp.horizon + 1, Vec::Zero(pp.input_dim()));
  return solve_constrained(tracking, rollout(tracking, tracking.x0, zero), cfg).trajectory;
}

}  // namespace nashmodes
