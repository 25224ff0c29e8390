#include "nashmodes/game.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "nashmodes/errors.hpp"

namespace nashmodes {

namespace detail {
void register_scenario_models(Registry& registry);
}

namespace {

constexpr double kFdStep = 1e-6;

/// x' = A x + B u with A, B given row-major in the "A" and "B" parameters.
class LinearDynamics final : public Dynamics {
 public:
  LinearDynamics(Mat A, Mat B) : A_(std::move(A)), B_(std::move(B)) {}
  int state_dim() const override { return static_cast<int>(A_.rows()); }
  int input_dim() const override { return static_cast<int>(B_.cols()); }
  Vec step(const VecView& x, const VecView& u, double /*dt*/) const override { return A_ * x + B_ * u; }
  void linearize(const VecView&, const VecView&, double, Mat& A, Mat& B) const override {
    A = A_;
    B = B_;
  }

 private:
  Mat A_;
  Mat B_;
};

class NoConstraints final : public ConstraintFn {
 public:
  int dim() const override { return 0; }
  Vec eval(const VecView&, const VecView&) const override { return Vec(0); }
  void jacobian(const VecView& x, const VecView& u, Mat& Gx, Mat& Gu) const override {
    Gx.resize(0, x.size());
    Gu.resize(0, u.size());
  }
};

Mat row_major(const std::vector<double>& values, int rows, int cols, const char* what) {
  if (static_cast<int>(values.size()) != rows * cols) {
    throw ConfigError(std::string("linear dynamics: parameter ") + what + " has wrong size");
  }
  Mat M(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) M(r, c) = values[r * cols + c];
  return M;
}

const std::vector<double>& param(const ParamMap& params, const std::string& key) {
  auto it = params.find(key);
  if (it == params.end()) throw ConfigError("missing parameter '" + key + "'");
  return it->second;
}

bool is_symmetric(const Mat& M) { return (M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + M.cwiseAbs().maxCoeff()); }

double min_eigenvalue(const Mat& M) {
  Eigen::SelfAdjointEigenSolver<Mat> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace

int GameSpec::state_dim() const {
  return std::accumulate(agents.begin(), agents.end(), 0,
                         [](int s, const AgentSpec& a) { return s + a.state_dim; });
}

int GameSpec::input_dim() const {
  return std::accumulate(agents.begin(), agents.end(), 0,
                         [](int s, const AgentSpec& a) { return s + a.input_dim; });
}

std::vector<AgentBlock> agent_blocks(const GameSpec& game) {
  std::vector<AgentBlock> blocks;
  int so = 0, io = 0;
  for (const auto& a : game.agents) {
    blocks.push_back({so, a.state_dim, io, a.input_dim});
    so += a.state_dim;
    io += a.input_dim;
  }
  return blocks;
}

void Dynamics::linearize(const VecView& x, const VecView& u, double dt, Mat& A, Mat& B) const {
  const int n = static_cast<int>(x.size());
  const int m = static_cast<int>(u.size());
  A.resize(n, n);
  B.resize(n, m);
  Vec xp = x, xm = x, up = u, um = u;
  for (int k = 0; k < n; ++k) {
    xp[k] += kFdStep;
    xm[k] -= kFdStep;
    A.col(k) = (step(xp, u, dt) - step(xm, u, dt)) / (2 * kFdStep);
    xp[k] = xm[k] = x[k];
  }
  for (int k = 0; k < m; ++k) {
    up[k] += kFdStep;
    um[k] -= kFdStep;
    B.col(k) = (step(x, up, dt) - step(x, um, dt)) / (2 * kFdStep);
    up[k] = um[k] = u[k];
  }
}

void ConstraintFn::jacobian(const VecView& x, const VecView& u, Mat& Gx, Mat& Gu) const {
  const int c = dim();
  const int n = static_cast<int>(x.size());
  const int m = static_cast<int>(u.size());
  Gx.resize(c, n);
  Gu.resize(c, m);
  Vec xp = x, xm = x, up = u, um = u;
  for (int k = 0; k < n; ++k) {
    xp[k] += kFdStep;
    xm[k] -= kFdStep;
    Gx.col(k) = (eval(xp, u) - eval(xm, u)) / (2 * kFdStep);
    xp[k] = xm[k] = x[k];
  }
  for (int k = 0; k < m; ++k) {
    up[k] += kFdStep;
    um[k] -= kFdStep;
    Gu.col(k) = (eval(x, up) - eval(x, um)) / (2 * kFdStep);
    up[k] = um[k] = u[k];
  }
}

Registry::Registry() {
  register_dynamics("linear", [](const AgentSpec& a) -> std::shared_ptr<const Dynamics> {
    Mat A = row_major(param(a.dynamics_params, "A"), a.state_dim, a.state_dim, "A");
    Mat B = row_major(param(a.dynamics_params, "B"), a.state_dim, a.input_dim, "B");
    return std::make_shared<LinearDynamics>(std::move(A), std::move(B));
  });
  register_constraints("none", [](const GameSpec&) -> std::shared_ptr<const ConstraintFn> {
    return std::make_shared<NoConstraints>();
  });
  detail::register_scenario_models(*this);
}

Registry& Registry::global() {
  static Registry registry;
  return registry;
}

void Registry::register_dynamics(const std::string& id, DynamicsFactory factory) {
  dynamics_[id] = std::move(factory);
}

void Registry::register_constraints(const std::string& id, ConstraintFactory factory) {
  constraints_[id] = std::move(factory);
}

bool Registry::has_dynamics(const std::string& id) const { return dynamics_.count(id) != 0; }
bool Registry::has_constraints(const std::string& id) const { return constraints_.count(id) != 0; }

std::shared_ptr<const Dynamics> Registry::make_dynamics(const AgentSpec& agent) const {
  auto it = dynamics_.find(agent.dynamics_id);
  if (it == dynamics_.end()) throw ConfigError("unknown dynamics id '" + agent.dynamics_id + "'");
  auto dyn = it->second(agent);
  if (dyn->state_dim() != agent.state_dim || dyn->input_dim() != agent.input_dim) {
    throw ConfigError("dynamics '" + agent.dynamics_id + "' dimensions do not match agent '" +
                      agent.name + "'");
  }
  return dyn;
}

std::shared_ptr<const ConstraintFn> Registry::make_constraints(const GameSpec& game) const {
  auto it = constraints_.find(game.constraint_id);
  if (it == constraints_.end()) throw ConfigError("unknown constraint id '" + game.constraint_id + "'");
  return it->second(game);
}

JointDynamics::JointDynamics(std::vector<std::shared_ptr<const Dynamics>> agents,
                             std::vector<AgentBlock> blocks)
    : agents_(std::move(agents)), blocks_(std::move(blocks)) {
  for (const auto& b : blocks_) {
    n_ += b.state_dim;
    m_ += b.input_dim;
  }
}

Vec JointDynamics::step(const VecView& x, const VecView& u, double dt) const {
  Vec next(n_);
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    const auto& b = blocks_[i];
    next.segment(b.state_offset, b.state_dim) =
        agents_[i]->step(x.segment(b.state_offset, b.state_dim), u.segment(b.input_offset, b.input_dim), dt);
  }
  return next;
}

void JointDynamics::linearize(const VecView& x, const VecView& u, double dt, Mat& A, Mat& B) const {
  A.setZero(n_, n_);
  B.setZero(n_, m_);
  Mat Ai, Bi;
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    const auto& b = blocks_[i];
    agents_[i]->linearize(x.segment(b.state_offset, b.state_dim), u.segment(b.input_offset, b.input_dim),
                          dt, Ai, Bi);
    A.block(b.state_offset, b.state_offset, b.state_dim, b.state_dim) = Ai;
    B.block(b.state_offset, b.input_offset, b.state_dim, b.input_dim) = Bi;
  }
}

void validate(const GameSpec& game) {
  if (game.agents.empty()) throw ConfigError("game needs at least one agent");
  if (game.horizon < 1) throw ConfigError("horizon must be >= 1");
  if (!(game.dt > 0)) throw ConfigError("dt must be positive");
  for (const auto& a : game.agents) {
    const std::string who = "agent '" + a.name + "': ";
    if (a.state_dim < 1 || a.input_dim < 1) throw ConfigError(who + "dimensions must be positive");
    if (a.Q.rows() != a.state_dim || a.Q.cols() != a.state_dim) throw ConfigError(who + "Q has wrong shape");
    if (a.Qtau.rows() != a.state_dim || a.Qtau.cols() != a.state_dim)
      throw ConfigError(who + "Qtau has wrong shape");
    if (a.R.rows() != a.input_dim || a.R.cols() != a.input_dim) throw ConfigError(who + "R has wrong shape");
    if (!is_symmetric(a.Q) || !is_symmetric(a.Qtau) || !is_symmetric(a.R))
      throw ConfigError(who + "weight matrices must be symmetric");
    if (min_eigenvalue(a.Q) < -1e-12 || min_eigenvalue(a.Qtau) < -1e-12)
      throw ConfigError(who + "Q and Qtau must be positive semidefinite");
    if (min_eigenvalue(a.R) <= 0) throw ConfigError(who + "R must be positive definite");
    if (static_cast<int>(a.reference.size()) != game.horizon + 1)
      throw ConfigError(who + "reference length must be horizon + 1");
    for (const auto& r : a.reference)
      if (r.size() != a.state_dim) throw ConfigError(who + "reference entry has wrong dimension");
  }
  if (game.x0.size() != game.state_dim())
    throw ConfigError("initial state dimension " + std::to_string(game.x0.size()) +
                      " does not match the agents' total state dimension " +
                      std::to_string(game.state_dim()));
}

Mat block_diagonal(const std::vector<Mat>& blocks) {
  Eigen::Index rows = 0, cols = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  Mat out = Mat::Zero(rows, cols);
  Eigen::Index r = 0, c = 0;
  for (const auto& b : blocks) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

PotentialProblem assemble_potential(const GameSpec& game) {
  validate(game);
  PotentialProblem pp;
  std::vector<Mat> qs, qts, rs;
  std::vector<std::shared_ptr<const Dynamics>> dyns;
  for (const auto& a : game.agents) {
    qs.push_back(a.Q);
    qts.push_back(a.Qtau);
    rs.push_back(a.R);
    dyns.push_back(Registry::global().make_dynamics(a));
  }
  pp.Q = block_diagonal(qs);
  pp.Qtau = block_diagonal(qts);
  pp.R = block_diagonal(rs);
  pp.blocks = agent_blocks(game);
  const int n = game.state_dim();
  pp.reference.assign(game.horizon + 1, Vec::Zero(n));
  for (int t = 0; t <= game.horizon; ++t)
    for (std::size_t i = 0; i < game.agents.size(); ++i)
      pp.reference[t].segment(pp.blocks[i].state_offset, pp.blocks[i].state_dim) = game.agents[i].reference[t];
  pp.dynamics = std::make_shared<JointDynamics>(std::move(dyns), pp.blocks);
  pp.constraints = Registry::global().make_constraints(game);
  pp.x0 = game.x0;
  pp.horizon = game.horizon;
  pp.dt = game.dt;
  return pp;
}

namespace {

void check_traj(const JointTrajectory& traj, int horizon, int n, int m) {
  if (traj.horizon() != horizon || static_cast<int>(traj.controls.size()) != horizon + 1)
    throw ConfigError("trajectory length does not match the horizon");
  for (const auto& x : traj.states)
    if (x.size() != n) throw ConfigError("trajectory state has wrong dimension");
  for (const auto& u : traj.controls)
    if (u.size() != m) throw ConfigError("trajectory control has wrong dimension");
}

}  // namespace

double eval_agent_cost(const GameSpec& game, const JointTrajectory& traj, int agent) {
  if (agent < 0 || agent >= game.num_agents()) throw std::out_of_range("agent index out of range");
  check_traj(traj, game.horizon, game.state_dim(), game.input_dim());
  const auto blocks = agent_blocks(game);
  const auto& a = game.agents[agent];
  const auto& b = blocks[agent];
  const int tau = game.horizon;
  double cost = 0.0;
  for (int t = 0; t <= tau; ++t) {
    const Vec dx = traj.states[t].segment(b.state_offset, b.state_dim) - a.reference[t];
    cost += weighted_sq_norm(dx, t == tau ? a.Qtau : a.Q);
    cost += weighted_sq_norm(traj.controls[t].segment(b.input_offset, b.input_dim), a.R);
  }
  return cost;
}

double eval_potential(const PotentialProblem& pp, const JointTrajectory& traj) {
  check_traj(traj, pp.horizon, pp.state_dim(), pp.input_dim());
  const int tau = pp.horizon;
  double cost = 0.0;
  for (int t = 0; t <= tau; ++t) {
    const Vec dx = traj.states[t] - pp.reference[t];
    cost += weighted_sq_norm(dx, t == tau ? pp.Qtau : pp.Q);
    cost += weighted_sq_norm(traj.controls[t], pp.R);
  }
  return cost;
}

JointTrajectory rollout(const PotentialProblem& pp, const Vec& x0, const std::vector<Vec>& controls) {
  if (static_cast<int>(controls.size()) != pp.horizon + 1)
    throw ConfigError("rollout needs horizon + 1 controls");
  if (x0.size() != pp.state_dim()) throw ConfigError("rollout initial state has wrong dimension");
  JointTrajectory traj;
  traj.controls = controls;
  traj.states.reserve(controls.size());
  traj.states.push_back(x0);
  for (int t = 0; t < pp.horizon; ++t) {
    if (controls[t].size() != pp.input_dim()) throw ConfigError("rollout control has wrong dimension");
    Vec next = pp.dynamics->step(traj.states.back(), controls[t], pp.dt);
    if (!next.allFinite()) throw NumericError("rollout produced a non-finite state", t + 1);
    traj.states.push_back(std::move(next));
  }
  return traj;
}

JointTrajectory rollout(const GameSpec& game, const Vec& x0, const std::vector<Vec>& controls) {
  return rollout(assemble_potential(game), x0, controls);
}

std::vector<Vec> eval_constraints(const PotentialProblem& pp, const JointTrajectory& traj) {
  std::vector<Vec> out;
  out.reserve(traj.states.size());
  for (std::size_t t = 0; t < traj.states.size(); ++t)
    out.push_back(pp.constraints->eval(traj.states[t], traj.controls[t]));
  return out;
}

std::vector<Vec> eval_constraints(const GameSpec& game, const JointTrajectory& traj) {
  auto g = Registry::global().make_constraints(game);
  std::vector<Vec> out;
  out.reserve(traj.states.size());
  for (std::size_t t = 0; t < traj.states.size(); ++t) out.push_back(g->eval(traj.states[t], traj.controls[t]));
  return out;
}

double max_constraint_violation(const PotentialProblem& pp, const JointTrajectory& traj) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& g : eval_constraints(pp, traj))
    if (g.size() > 0) worst = std::max(worst, g.maxCoeff());
  return worst;
}

std::vector<Vec> agent_states(const JointTrajectory& traj, const AgentBlock& block) {
  std::vector<Vec> out;
  out.reserve(traj.states.size());
  for (const auto& x : traj.states) out.push_back(x.segment(block.state_offset, block.state_dim));
  return out;
}

std::vector<Vec> agent_controls(const JointTrajectory& traj, const AgentBlock& block) {
  std::vector<Vec> out;
  out.reserve(traj.controls.size());
  for (const auto& u : traj.controls) out.push_back(u.segment(block.input_offset, block.input_dim));
  return out;
}

}  // namespace nashmodes
