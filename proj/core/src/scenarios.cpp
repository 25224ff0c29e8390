#include "nashmodes/scenarios.hpp"

#include <cmath>

#include "nashmodes/errors.hpp"

namespace nashmodes {

namespace {

class UnicycleDynamics final : public Dynamics {
 public:
  int state_dim() const override { return 5; }
  int input_dim() const override { return 2; }

  Vec step(const VecView& x, const VecView& u, double dt) const override {
    const UnicycleState s{x[0], x[1], x[2], x[3], x[4]};
    return unicycle_step(s, {u[0], u[1]}, dt).to_vec();
  }

  void linearize(const VecView& x, const VecView& /*u*/, double dt, Mat& A, Mat& B) const override {
    const double th = x[2], nu = x[3];
    const double c = std::cos(th), s = std::sin(th);
    A = Mat::Identity(5, 5);
    A(0, 2) = -dt * nu * s;
    A(0, 3) = dt * c;
    A(1, 2) = dt * nu * c;
    A(1, 3) = dt * s;
    A(2, 4) = dt;
    B = Mat::Zero(5, 2);
    B(3, 0) = 1.0;
    B(4, 1) = 1.0;
  }
};

double sign_of(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

// -d(a, b) + r and its gradient with respect to a. Zero gradient at coincident points.
double distance_constraint(const Eigen::Vector2d& a, const Eigen::Vector2d& b, double r, Eigen::Vector2d& grad_a) {
  const Eigen::Vector2d diff = a - b;
  const double d = diff.norm();
  grad_a = d > 0 ? Eigen::Vector2d(-diff / d) : Eigen::Vector2d::Zero();
  return -d + r;
}

}  // namespace

Vec UnicycleState::to_vec() const { return (Vec(5) << p, q, theta, nu, omega).finished(); }

UnicycleState UnicycleState::from_vec(const Vec& v) { return {v[0], v[1], v[2], v[3], v[4]}; }

UnicycleState unicycle_step(const UnicycleState& s, const UnicycleInput& u, double dt) {
  UnicycleState n;
  n.p = s.p + dt * s.nu * std::cos(s.theta);
  n.q = s.q + dt * s.nu * std::sin(s.theta);
  n.theta = s.theta + dt * s.omega;
  n.nu = s.nu + u.dnu;
  n.omega = s.omega + u.domega;
  return n;
}

std::string to_string(ScenarioKind kind) { return kind == ScenarioKind::HeadOn ? "head_on" : "obstacle_swap"; }

ScenarioKind scenario_kind_from_string(const std::string& name) {
  if (name == "head_on") return ScenarioKind::HeadOn;
  if (name == "obstacle_swap") return ScenarioKind::ObstacleSwap;
  throw ConfigError("unknown scenario '" + name + "' (expected head_on or obstacle_swap)");
}

ScenarioConfig scenario_preset(const std::string& name) {
  ScenarioConfig cfg;
  cfg.kind = scenario_kind_from_string(name);
  return cfg;
}

std::vector<std::string> scenario_names() { return {"head_on", "obstacle_swap"}; }

void validate(const ScenarioConfig& cfg) {
  if (!(cfg.r_col > 0)) throw ConfigError("r_col must be positive");
  if (cfg.kind == ScenarioKind::ObstacleSwap && !(cfg.r_obs > cfg.r_col))
    throw ConfigError("obstacle_swap requires r_obs > r_col");
  for (const auto& b : cfg.u_bound)
    if (!(b.minCoeff() > 0)) throw ConfigError("control bounds must be positive");
  for (int i = 0; i < 2; ++i)
    if ((cfg.goal[i] - cfg.start[i]).norm() < 1e-9) throw ConfigError("start and goal coincide");
  if (cfg.horizon < 1) throw ConfigError("horizon must be >= 1");
  if (!(cfg.dt > 0)) throw ConfigError("dt must be positive");
  if (cfg.q_base.size() != 5) throw ConfigError("base state weight must have 5 entries");
}

ParamMap constraint_params(const ScenarioConfig& cfg) {
  ParamMap params;
  params["r_col"] = {cfg.r_col};
  if (cfg.kind == ScenarioKind::ObstacleSwap) {
    params["r_obs"] = {cfg.r_obs};
    params["x_obs"] = {cfg.x_obs.x(), cfg.x_obs.y()};
  }
  params["u_bound_1"] = {cfg.u_bound[0].x(), cfg.u_bound[0].y()};
  params["u_bound_2"] = {cfg.u_bound[1].x(), cfg.u_bound[1].y()};
  return params;
}

GameSpec build_scenario(const ScenarioConfig& cfg) {
  validate(cfg);
  GameSpec game;
  game.horizon = cfg.horizon;
  game.dt = cfg.dt;
  game.constraint_id = kUnicyclePairConstraints;
  game.constraint_params = constraint_params(cfg);
  game.x0 = Vec::Zero(10);

  const Mat q_hat = cfg.q_base.asDiagonal();
  for (int i = 0; i < 2; ++i) {
    AgentSpec a;
    a.name = "agent" + std::to_string(i + 1);
    a.state_dim = 5;
    a.input_dim = 2;
    a.Q = cfg.stage_scale * q_hat;
    a.Qtau = cfg.terminal_scale * q_hat;
    a.R = cfg.r_diag.asDiagonal();
    a.dynamics_id = "unicycle";

    const Eigen::Vector2d delta = cfg.goal[i] - cfg.start[i];
    const double heading = std::atan2(delta.y(), delta.x());
    const double speed = delta.norm() / (cfg.horizon * cfg.dt);
    for (int t = 0; t <= cfg.horizon; ++t) {
      const Eigen::Vector2d pos = cfg.start[i] + delta * (static_cast<double>(t) / cfg.horizon);
      a.reference.push_back(UnicycleState{pos.x(), pos.y(), heading, speed, 0.0}.to_vec());
    }
    game.x0.segment(5 * i, 5) = a.reference.front();
    game.agents.push_back(std::move(a));
  }
  return game;
}

UnicyclePairConstraints::UnicyclePairConstraints(double r_col, bool has_obstacle, double r_obs,
                                                 Eigen::Vector2d x_obs, std::array<Eigen::Vector2d, 2> u_bound)
    : r_col_(r_col), has_obstacle_(has_obstacle), r_obs_(r_obs), x_obs_(std::move(x_obs)), u_bound_(u_bound) {}

UnicyclePairConstraints UnicyclePairConstraints::from_params(const ParamMap& params) {
  auto get = [&](const std::string& key, std::size_t size) -> const std::vector<double>& {
    auto it = params.find(key);
    if (it == params.end() || it->second.size() != size)
      throw ConfigError("unicycle_pair constraints: missing or malformed parameter '" + key + "'");
    return it->second;
  };
  const bool obstacle = params.count("r_obs") != 0;
  const double r_obs = obstacle ? get("r_obs", 1)[0] : 0.0;
  Eigen::Vector2d x_obs = Eigen::Vector2d::Zero();
  if (obstacle) x_obs = Eigen::Vector2d(get("x_obs", 2)[0], get("x_obs", 2)[1]);
  const auto& b1 = get("u_bound_1", 2);
  const auto& b2 = get("u_bound_2", 2);
  return UnicyclePairConstraints(get("r_col", 1)[0], obstacle, r_obs, x_obs,
                                 {Eigen::Vector2d(b1[0], b1[1]), Eigen::Vector2d(b2[0], b2[1])});
}

Vec UnicyclePairConstraints::eval(const VecView& x, const VecView& u) const {
  Vec g(dim());
  const Eigen::Vector2d p1 = x.segment<2>(0), p2 = x.segment<2>(5);
  int k = 0;
  g[k++] = -(p1 - p2).norm() + r_col_;
  if (has_obstacle_) {
    g[k++] = -(p1 - x_obs_).norm() + r_obs_;
    g[k++] = -(p2 - x_obs_).norm() + r_obs_;
  }
  g[k++] = -x[3];
  g[k++] = -x[8];
  g[k++] = std::abs(u[0]) - u_bound_[0].x();
  g[k++] = std::abs(u[1]) - u_bound_[0].y();
  g[k++] = std::abs(u[2]) - u_bound_[1].x();
  g[k++] = std::abs(u[3]) - u_bound_[1].y();
  return g;
}

void UnicyclePairConstraints::jacobian(const VecView& x, const VecView& u, Mat& Gx, Mat& Gu) const {
  Gx = Mat::Zero(dim(), 10);
  Gu = Mat::Zero(dim(), 4);
  const Eigen::Vector2d p1 = x.segment<2>(0), p2 = x.segment<2>(5);
  Eigen::Vector2d grad;
  int k = 0;
  distance_constraint(p1, p2, r_col_, grad);
  Gx.block<1, 2>(k, 0) = grad.transpose();
  Gx.block<1, 2>(k, 5) = -grad.transpose();
  ++k;
  if (has_obstacle_) {
    distance_constraint(p1, x_obs_, r_obs_, grad);
    Gx.block<1, 2>(k++, 0) = grad.transpose();
    distance_constraint(p2, x_obs_, r_obs_, grad);
    Gx.block<1, 2>(k++, 5) = grad.transpose();
  }
  Gx(k++, 3) = -1.0;
  Gx(k++, 8) = -1.0;
  for (int j = 0; j < 4; ++j) Gu(k++, j) = sign_of(u[j]);
}

JointTrajectory reflect_trajectory(const GameSpec& game, const JointTrajectory& traj) {
  // Axis through the first agent's start and goal.
  const Vec& ref0 = game.agents.front().reference.front();
  const Vec& ref1 = game.agents.front().reference.back();
  const Eigen::Vector2d origin(ref0[0], ref0[1]);
  Eigen::Vector2d dir(ref1[0] - ref0[0], ref1[1] - ref0[1]);
  dir.normalize();
  const Eigen::Matrix2d mirror = 2.0 * dir * dir.transpose() - Eigen::Matrix2d::Identity();

  const auto blocks = agent_blocks(game);
  JointTrajectory out = traj;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const double axis_heading = game.agents[i].reference.front()[2];
    for (auto& x : out.states) {
      auto s = x.segment(b.state_offset, 5);
      const Eigen::Vector2d pos = origin + mirror * (Eigen::Vector2d(s[0], s[1]) - origin);
      s[0] = pos.x();
      s[1] = pos.y();
      s[2] = 2.0 * axis_heading - s[2];
      s[4] = -s[4];
    }
    for (auto& u : out.controls) u[b.input_offset + 1] = -u[b.input_offset + 1];
  }
  return out;
}

std::vector<Eigen::Vector2d> agent_positions(const JointTrajectory& traj, const AgentBlock& block) {
  std::vector<Eigen::Vector2d> out;
  out.reserve(traj.states.size());
  for (const auto& x : traj.states) out.emplace_back(x[block.state_offset], x[block.state_offset + 1]);
  return out;
}

namespace detail {

void register_scenario_models(Registry& registry) {
  registry.register_dynamics("unicycle", [](const AgentSpec&) -> std::shared_ptr<const Dynamics> {
    return std::make_shared<UnicycleDynamics>();
  });
  registry.register_constraints(kUnicyclePairConstraints, [](const GameSpec& game) -> std::shared_ptr<const ConstraintFn> {
    if (game.state_dim() != 10 || game.input_dim() != 4)
      throw ConfigError("unicycle_pair constraints need two unicycle agents");
    return std::make_shared<UnicyclePairConstraints>(UnicyclePairConstraints::from_params(game.constraint_params));
  });
}

}  // namespace detail

}  // namespace nashmodes
