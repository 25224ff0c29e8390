#include "nashmodes/certificate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nashmodes/errors.hpp"

namespace nashmodes {

namespace {

struct Deviation {
  JointTrajectory traj;
  double norm = 0.0;
};

/// Rolls out a unilateral change of agent `block`'s controls; the others' controls are
/// untouched and, with agentwise dynamics, so are their states.
Deviation deviate(const PotentialProblem& pp, const JointTrajectory& base, const AgentBlock& block, const Vec& delta) {
  std::vector<Vec> controls = base.controls;
  const int mi = block.input_dim;
  for (std::size_t t = 0; t < controls.size(); ++t)
    controls[t].segment(block.input_offset, mi) += delta.segment(static_cast<Eigen::Index>(t) * mi, mi);
  Deviation out;
  out.traj = rollout(pp, pp.x0, controls);
  double sq = 0.0;
  for (std::size_t t = 0; t < controls.size(); ++t) {
    sq += (out.traj.states[t] - base.states[t]).segment(block.state_offset, block.state_dim).squaredNorm();
    sq += delta.segment(static_cast<Eigen::Index>(t) * mi, mi).squaredNorm();
  }
  out.norm = std::sqrt(sq);
  return out;
}

bool within_allowance(const std::vector<Vec>& g, const std::vector<Vec>& allowance) {
  for (std::size_t t = 0; t < g.size(); ++t)
    if ((g[t].array() > allowance[t].array()).any()) return false;
  return true;
}

}  // namespace

void validate(const CertificateConfig& cfg) {
  if (!(cfg.radius > 0)) throw ConfigError("certificate radius must be positive");
  if (cfg.samples < 0) throw ConfigError("certificate sample count must be >= 0");
  if (!(cfg.improvement_tol >= 0) || !(cfg.stationarity_tol > 0) || !(cfg.constraint_tol > 0) || !(cfg.fd_step > 0))
    throw ConfigError("certificate tolerances must be positive");
}

Vec nnls(const Mat& A, const Vec& b, int max_iterations) {
  const Eigen::Index n = A.cols();
  if (max_iterations <= 0) max_iterations = static_cast<int>(3 * n + 10);
  Vec x = Vec::Zero(n);
  if (n == 0) return x;
  std::vector<bool> passive(n, false);
  const double tol = 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff()) * std::max(1.0, b.cwiseAbs().maxCoeff());

  auto solve_passive = [&](Vec& s) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j)
      if (passive[j]) idx.push_back(j);
    Mat Ap(A.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) Ap.col(static_cast<Eigen::Index>(k)) = A.col(idx[k]);
    const Vec sp = Ap.completeOrthogonalDecomposition().solve(b);
    s = Vec::Zero(n);
    for (std::size_t k = 0; k < idx.size(); ++k) s[idx[k]] = sp[static_cast<Eigen::Index>(k)];
  };

  for (int iter = 0; iter < max_iterations; ++iter) {
    const Vec w = A.transpose() * (b - A * x);
    Eigen::Index best = -1;
    double top = tol;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[j] && w[j] > top) {
        top = w[j];
        best = j;
      }
    }
    if (best < 0) break;
    passive[best] = true;

    Vec s;
    solve_passive(s);
    for (int inner = 0; inner < max_iterations; ++inner) {
      double alpha = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[j] && s[j] <= 0) alpha = std::min(alpha, x[j] / (x[j] - s[j]));
      if (!std::isfinite(alpha)) break;
      x += alpha * (s - x);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && x[j] <= tol) {
          passive[j] = false;
          x[j] = 0.0;
        }
      }
      solve_passive(s);
    }
    x = s;
  }
  return x.cwiseMax(0.0);
}

GneCertificate check_local_gne(const GameSpec& game, const JointTrajectory& candidate, const CertificateConfig& cfg,
                               std::mt19937_64& rng) {
  validate(cfg);
  const PotentialProblem pp = assemble_potential(game);
  if (candidate.horizon() != pp.horizon || static_cast<int>(candidate.controls.size()) != pp.horizon + 1)
    throw ConfigError("candidate horizon does not match the game");

  // Work on the rollout of the candidate's controls so states are dynamically consistent.
  const JointTrajectory base = rollout(pp, pp.x0, candidate.controls);
  const std::vector<Vec> g_base = eval_constraints(pp, base);
  std::vector<Vec> allowance;
  allowance.reserve(g_base.size());
  for (const auto& g : g_base) allowance.push_back(g.cwiseMax(0.0));

  GneCertificate cert;
  cert.radius = cfg.radius;
  cert.samples = cfg.samples;
  cert.improvement_tol = cfg.improvement_tol;
  cert.stationarity_tol = cfg.stationarity_tol;
  cert.max_violation = pp.constraint_dim() > 0 ? max_constraint_violation(pp, base) : 0.0;
  cert.feasible = cert.max_violation <= cfg.constraint_tol;

  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const int steps = pp.horizon + 1;

  for (int i = 0; i < game.num_agents(); ++i) {
    const AgentBlock& block = pp.blocks[i];
    const int dim = steps * block.input_dim;
    AgentCertificate ac;
    ac.cost = eval_agent_cost(game, base, i);
    ac.worst_improvement = -std::numeric_limits<double>::infinity();

    // Central differences of the agent's cost and of every constraint component.
    Vec grad(dim);
    std::vector<std::vector<Vec>> g_plus(dim), g_minus(dim);
    for (int j = 0; j < dim; ++j) {
      Vec e = Vec::Zero(dim);
      e[j] = cfg.fd_step;
      const auto plus = deviate(pp, base, block, e).traj;
      const auto minus = deviate(pp, base, block, -e).traj;
      grad[j] = (eval_agent_cost(game, plus, i) - eval_agent_cost(game, minus, i)) / (2.0 * cfg.fd_step);
      if (pp.constraint_dim() > 0) {
        g_plus[j] = eval_constraints(pp, plus);
        g_minus[j] = eval_constraints(pp, minus);
      }
    }
    std::vector<Vec> columns;
    for (int t = 0; t < steps && pp.constraint_dim() > 0; ++t) {
      for (int c = 0; c < pp.constraint_dim(); ++c) {
        if (g_base[t][c] < -cfg.active_threshold) continue;
        Vec col(dim);
        for (int j = 0; j < dim; ++j) col[j] = (g_plus[j][t][c] - g_minus[j][t][c]) / (2.0 * cfg.fd_step);
        if (col.lpNorm<Eigen::Infinity>() > 0) columns.push_back(std::move(col));
      }
    }
    ac.active_constraints = static_cast<int>(columns.size());
    Mat G(dim, static_cast<Eigen::Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c) G.col(static_cast<Eigen::Index>(c)) = columns[c];
    Vec residual = grad;
    if (!columns.empty()) residual += G * nnls(G, -grad);
    Eigen::CompleteOrthogonalDecomposition<Mat> gram;
    if (!columns.empty()) gram.compute(G.transpose() * G);

    for (int k = 0; k < cfg.samples; ++k) {
      Vec dir(dim);
      for (Eigen::Index j = 0; j < dim; ++j) dir[j] = normal(rng);
      if (!columns.empty()) {
        // Reflect the draw so every near-active constraint moves strictly inward to first order:
        // G' dir = -|G' dir0|.
        const Vec v = G.transpose() * dir;
        dir -= G * gram.solve(2.0 * v.cwiseMax(0.0));
      }
      if (dir.norm() == 0) continue;
      dir.normalize();
      const double target = cfg.radius * uniform(rng);
      // The trajectory norm is close to linear in the control scale; a few secant
      // corrections land near the target and the final check enforces the bound.
      double scale = target;
      Deviation dev = deviate(pp, base, block, scale * dir);
      for (int it = 0; it < 4 && dev.norm > 0; ++it) {
        scale *= target / dev.norm;
        dev = deviate(pp, base, block, scale * dir);
      }
      while (dev.norm > cfg.radius) {
        scale *= 0.5;
        dev = deviate(pp, base, block, scale * dir);
      }
      if (pp.constraint_dim() > 0 && !within_allowance(eval_constraints(pp, dev.traj), allowance)) continue;
      ++ac.feasible_samples;
      ac.worst_improvement = std::max(ac.worst_improvement, ac.cost - eval_agent_cost(game, dev.traj, i));
    }
    if (ac.feasible_samples == 0) ac.worst_improvement = 0.0;

    ac.stationarity = residual.lpNorm<Eigen::Infinity>() / stationarity_scale(ac.cost);
    cert.agents.push_back(ac);
  }

  std::ostringstream detail;
  if (!cert.feasible) detail << "max constraint violation " << cert.max_violation << " exceeds " << cfg.constraint_tol;
  for (std::size_t i = 0; i < cert.agents.size() && detail.str().empty(); ++i) {
    const auto& a = cert.agents[i];
    if (a.worst_improvement > cfg.improvement_tol)
      detail << "agent " << i + 1 << " improves its cost by " << a.worst_improvement << " with a unilateral deviation";
    else if (a.stationarity > cfg.stationarity_tol)
      detail << "agent " << i + 1 << " stationarity residual " << a.stationarity << " exceeds " << cfg.stationarity_tol;
  }
  cert.detail = detail.str();
  cert.passed = cert.detail.empty();
  return cert;
}

GneCertificate check_local_gne(const GameSpec& game, const RefinedEquilibrium& eq, const CertificateConfig& cfg,
                               std::mt19937_64& rng) {
  return check_local_gne(game, eq.trajectory, cfg, rng);
}

}  // namespace nashmodes
