#pragma once

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace nashmodes {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
/// Read-only view accepting vectors and vector segments without a copy.
using VecView = Eigen::Ref<const Vec>;

/// Named numeric parameters attached to registry entries (radii, bounds, matrices).
using ParamMap = std::map<std::string, std::vector<double>>;

struct AgentSpec {
  std::string name;
  int state_dim = 0;
  int input_dim = 0;
  Mat Q;     // stage state weight
  Mat Qtau;  // terminal state weight
  Mat R;     // control weight
  std::vector<Vec> reference;  // horizon + 1 entries
  std::string dynamics_id;
  ParamMap dynamics_params;
};

struct GameSpec {
  std::vector<AgentSpec> agents;
  int horizon = 0;  // number of steps; trajectories have horizon + 1 samples
  double dt = 0.1;
  std::string constraint_id = "none";
  ParamMap constraint_params;
  Vec x0;

  int num_agents() const { return static_cast<int>(agents.size()); }
  int state_dim() const;
  int input_dim() const;
};

/// States and controls of all agents at t = 0..horizon. The final control only enters the cost.
struct JointTrajectory {
  std::vector<Vec> states;
  std::vector<Vec> controls;

  int horizon() const { return static_cast<int>(states.size()) - 1; }
};

/// Offsets of one agent's slice inside the joint state and control vectors.
struct AgentBlock {
  int state_offset = 0;
  int state_dim = 0;
  int input_offset = 0;
  int input_dim = 0;
};

std::vector<AgentBlock> agent_blocks(const GameSpec& game);

class Dynamics {
 public:
  virtual ~Dynamics() = default;
  virtual int state_dim() const = 0;
  virtual int input_dim() const = 0;
  virtual Vec step(const VecView& x, const VecView& u, double dt) const = 0;
  /// Jacobians of step() with respect to x and u. Defaults to central differences.
  virtual void linearize(const VecView& x, const VecView& u, double dt, Mat& A, Mat& B) const;
};

class ConstraintFn {
 public:
  virtual ~ConstraintFn() = default;
  virtual int dim() const = 0;
  /// g(x, u); feasible when every component is <= 0.
  virtual Vec eval(const VecView& x, const VecView& u) const = 0;
  /// Jacobians of eval() with respect to x and u. Defaults to central differences.
  virtual void jacobian(const VecView& x, const VecView& u, Mat& Gx, Mat& Gu) const;
};

using DynamicsFactory =
    std::function<std::shared_ptr<const Dynamics>(const AgentSpec& agent)>;
using ConstraintFactory =
    std::function<std::shared_ptr<const ConstraintFn>(const GameSpec& game)>;

/// Resolves dynamics and constraint identifiers to implementations.
class Registry {
 public:
  static Registry& global();

  void register_dynamics(const std::string& id, DynamicsFactory factory);
  void register_constraints(const std::string& id, ConstraintFactory factory);

  std::shared_ptr<const Dynamics> make_dynamics(const AgentSpec& agent) const;
  std::shared_ptr<const ConstraintFn> make_constraints(const GameSpec& game) const;

  bool has_dynamics(const std::string& id) const;
  bool has_constraints(const std::string& id) const;

 private:
  Registry();
  std::map<std::string, DynamicsFactory> dynamics_;
  std::map<std::string, ConstraintFactory> constraints_;
};

/// Agentwise composition of per-agent transition maps.
class JointDynamics {
 public:
  JointDynamics(std::vector<std::shared_ptr<const Dynamics>> agents, std::vector<AgentBlock> blocks);

  int state_dim() const { return n_; }
  int input_dim() const { return m_; }
  Vec step(const VecView& x, const VecView& u, double dt) const;
  void linearize(const VecView& x, const VecView& u, double dt, Mat& A, Mat& B) const;

 private:
  std::vector<std::shared_ptr<const Dynamics>> agents_;
  std::vector<AgentBlock> blocks_;
  int n_ = 0;
  int m_ = 0;
};

/// The single optimal control problem whose local minimizers are local equilibria.
struct PotentialProblem {
  Mat Q;
  Mat Qtau;
  Mat R;
  std::vector<Vec> reference;
  std::shared_ptr<const JointDynamics> dynamics;
  std::shared_ptr<const ConstraintFn> constraints;
  Vec x0;
  int horizon = 0;
  double dt = 0.1;
  std::vector<AgentBlock> blocks;

  int state_dim() const { return static_cast<int>(x0.size()); }
  int input_dim() const { return static_cast<int>(R.rows()); }
  int constraint_dim() const { return constraints ? constraints->dim() : 0; }
};

/// Throws ConfigError when the game violates its structural invariants.
void validate(const GameSpec& game);

Mat block_diagonal(const std::vector<Mat>& blocks);

/// v' M v, no one-half factor.
inline double weighted_sq_norm(const Vec& v, const Mat& M) { return v.dot(M * v); }

PotentialProblem assemble_potential(const GameSpec& game);

double eval_agent_cost(const GameSpec& game, const JointTrajectory& traj, int agent);
double eval_potential(const PotentialProblem& pp, const JointTrajectory& traj);

/// Propagates x0 through the joint dynamics; controls.size() must be horizon + 1.
JointTrajectory rollout(const GameSpec& game, const Vec& x0, const std::vector<Vec>& controls);
JointTrajectory rollout(const PotentialProblem& pp, const Vec& x0, const std::vector<Vec>& controls);

std::vector<Vec> eval_constraints(const GameSpec& game, const JointTrajectory& traj);
std::vector<Vec> eval_constraints(const PotentialProblem& pp, const JointTrajectory& traj);

/// Largest constraint component over the trajectory (negative when strictly feasible).
double max_constraint_violation(const PotentialProblem& pp, const JointTrajectory& traj);

/// Copy of one agent's states or controls over time.
std::vector<Vec> agent_states(const JointTrajectory& traj, const AgentBlock& block);
std::vector<Vec> agent_controls(const JointTrajectory& traj, const AgentBlock& block);

}  // namespace nashmodes
