#pragma once

#include <array>
#include <string>
#include <vector>

#include "nashmodes/game.hpp"

namespace nashmodes {

/// Planar unicycle state: position (p, q), unwrapped heading, linear and angular speed.
struct UnicycleState {
  double p = 0.0;
  double q = 0.0;
  double theta = 0.0;
  double nu = 0.0;
  double omega = 0.0;

  Vec to_vec() const;
  static UnicycleState from_vec(const Vec& v);
};

/// Control increments applied to the unicycle speeds.
struct UnicycleInput {
  double dnu = 0.0;
  double domega = 0.0;
};

UnicycleState unicycle_step(const UnicycleState& s, const UnicycleInput& u, double dt);

enum class ScenarioKind { HeadOn, ObstacleSwap };

std::string to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(const std::string& name);

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::HeadOn;
  std::array<Eigen::Vector2d, 2> start{Eigen::Vector2d(-8.0, 0.0), Eigen::Vector2d(8.0, 0.0)};
  std::array<Eigen::Vector2d, 2> goal{Eigen::Vector2d(8.0, 0.0), Eigen::Vector2d(-8.0, 0.0)};
  double r_col = 3.0;
  double r_obs = 4.0;
  Eigen::Vector2d x_obs = Eigen::Vector2d::Zero();
  std::array<Eigen::Vector2d, 2> u_bound{Eigen::Vector2d(0.15, 0.75), Eigen::Vector2d(0.15, 0.75)};
  int horizon = 60;
  double dt = 0.1;
  double stage_scale = 0.6;
  double terminal_scale = 100.0;
  Vec q_base = (Vec(5) << 50, 10, 5, 5, 2).finished();
  Eigen::Vector2d r_diag{8.0, 4.0};
};

/// Named presets: "head_on" and "obstacle_swap".
ScenarioConfig scenario_preset(const std::string& name);
std::vector<std::string> scenario_names();

void validate(const ScenarioConfig& cfg);

/// Two-unicycle game with straight-line references and the registered constraint stack.
GameSpec build_scenario(const ScenarioConfig& cfg);

/// Registry identifier of the two-unicycle constraint stack.
inline constexpr const char* kUnicyclePairConstraints = "unicycle_pair";

/// Stacked constraints [g_c; g_o^1; g_o^2; g_b] (obstacle rows only when present).
class UnicyclePairConstraints final : public ConstraintFn {
 public:
  UnicyclePairConstraints(double r_col, bool has_obstacle, double r_obs, Eigen::Vector2d x_obs,
                          std::array<Eigen::Vector2d, 2> u_bound);
  static UnicyclePairConstraints from_params(const ParamMap& params);

  int dim() const override { return has_obstacle_ ? 9 : 7; }
  Vec eval(const VecView& x, const VecView& u) const override;
  void jacobian(const VecView& x, const VecView& u, Mat& Gx, Mat& Gu) const override;

  bool has_obstacle() const { return has_obstacle_; }
  double r_col() const { return r_col_; }

 private:
  double r_col_;
  bool has_obstacle_;
  double r_obs_;
  Eigen::Vector2d x_obs_;
  std::array<Eigen::Vector2d, 2> u_bound_;
};

ParamMap constraint_params(const ScenarioConfig& cfg);

/// Mirror a two-unicycle trajectory across the line through both starts (the x axis for the presets).
/// Headings reflect about each agent's reference heading so unwrapped angles stay near their reference.
JointTrajectory reflect_trajectory(const GameSpec& game, const JointTrajectory& traj);

/// Planar positions of one agent over a trajectory (first two state entries).
std::vector<Eigen::Vector2d> agent_positions(const JointTrajectory& traj, const AgentBlock& block);

}  // namespace nashmodes
