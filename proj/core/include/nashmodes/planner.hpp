#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nashmodes/clustering.hpp"
#include "nashmodes/game.hpp"
#include "nashmodes/particle_filter.hpp"
#include "nashmodes/refiner.hpp"
#include "nashmodes/virtual_model.hpp"

namespace nashmodes {

struct PipelineConfig {
  FilterConfig filter;
  ClusterConfig cluster;
  RefinerConfig refiner;
  BarrierConfig barrier;
  double slack_weight = 2e4;    // Q_eta = slack_weight * I_c
  double dedup_distance = 0.5;  // delta_dup (m)
  int guide_iterations = 60;
  int refine_threads = 1;
};

void validate(const PipelineConfig& cfg);

/// Filter, cluster, one refinement per cluster, dedup. Unconverged refinements are dropped
/// and reported in the diagnostics.
EquilibriumSet multinash_pf(const GameSpec& game, const PipelineConfig& cfg = {});

struct BaselineConfig {
  int target_modes = 6;  // M
  int budget = 100;      // B, refiner invocations
  double sigma = 0.3;    // sigma_b
  std::uint64_t seed = 0;
  double dedup_distance = 0.5;
};

void validate(const BaselineConfig& cfg);

struct BaselineResult {
  EquilibriumSet modes;
  int invocations = 0;
  double seconds = 0.0;
  bool exhausted = false;  // stopped by the budget before reaching the target
};

/// Refines random perturbations of the reference controls until the target is met. With
/// `targets`, the target is a converged match (Frechet <= dedup distance) for every target
/// trajectory; otherwise it is target_modes distinct converged modes.
BaselineResult baseline_random_init(const GameSpec& game, const RefinerConfig& refiner, const BaselineConfig& cfg,
                                    const std::vector<JointTrajectory>* targets = nullptr);

struct ModeBelief {
  std::vector<double> distances;  // d_i (m)
  int locked = -1;                // mode index once locked
  int lock_step = -1;
  double dstar = 1.0;             // lock threshold d* (m)

  bool is_locked() const { return locked >= 0; }
  /// Locked mode, else the closest mode (0 when no distances yet).
  int selected() const;
};

/// Planar positions of one agent along a mode, samples 0..t (clamped to the mode's horizon).
Polyline mode_prefix(const JointTrajectory& mode, const AgentBlock& block, int t);

/// Frechet distances from the observed partner prefix to every mode's partner prefix; locks
/// once the gap between the two smallest exceeds d*. Never unlocks.
ModeBelief mode_belief_update(const ModeBelief& belief, const Polyline& observed, const EquilibriumSet& modes,
                              const AgentBlock& partner, int t);

struct MpcConfig {
  double horizon_s = 5.0;  // H
  double dt = 0.1;
  int replan_period = 1;   // steps
  double total_s = 10.0;   // T
  double tentative_speed_cap = 0.8;  // fraction of nominal ego speed before lock
  double fallback_violation = 1e-2;
  // The partner is predicted, not negotiated with: its control effort is scaled up so the
  // window keeps its current speed and turn rate, and the ego plans a best response.
  double partner_effort_scale = 1e4;
  double collision_margin = 0.3;  // m added to r_col inside the window
  int ego = 0;
  int partner = 1;

  int horizon_steps() const;
  int total_steps() const;
};

void validate(const MpcConfig& cfg);

/// Refiner budget used for receding-horizon replans.
RefinerConfig default_mpc_refiner();

struct MpcPlan {
  Vec ego_control;
  JointTrajectory plan;
  int mode = -1;
  bool tentative = true;
  bool fallback = false;
  std::string note;
};

/// Reference window for a receding-horizon game: samples t..t+H of the mode, holding the
/// terminal pose with zero speeds beyond its horizon.
std::vector<Vec> mode_window(const JointTrajectory& mode, int t, int steps, const std::vector<AgentBlock>& blocks);

/// One replan from the current joint state at global step t. `previous` is the last plan
/// (shifted by one step for the warm start).
MpcPlan mpc_step(const GameSpec& game, const EquilibriumSet& modes, const ModeBelief& belief, const Vec& state, int t,
                 const MpcConfig& cfg, const RefinerConfig& refiner, const MpcPlan* previous = nullptr);

/// Replans on the replan period (and when there is no plan yet), otherwise shifts
/// `previous` one step along.
MpcPlan plan_tick(const GameSpec& game, const EquilibriumSet& modes, const ModeBelief& belief, const Vec& state, int t,
                  const MpcConfig& cfg, const RefinerConfig& refiner, const MpcPlan* previous);

/// Partner motion: next partner state from the step index and the current joint state.
using PartnerPolicy = std::function<Vec(int t, const Vec& joint_state)>;

/// Partner replays one mode's partner trajectory, then holds its final pose at rest.
PartnerPolicy follow_mode_partner(const JointTrajectory& mode, const AgentBlock& partner);
/// Partner keeps its initial heading and speed.
PartnerPolicy straight_partner(const AgentBlock& partner, double dt);
/// Partner stays where it is, at rest.
PartnerPolicy stationary_partner(const AgentBlock& partner);

struct ClosedLoopLog {
  std::vector<Vec> states;  // joint states, 0..steps
  std::vector<Vec> ego_controls;
  std::vector<ModeBelief> beliefs;  // after each step's observation
  std::vector<JointTrajectory> plans;
  int lock_step = -1;
  int locked_mode = -1;
  double min_distance = 0.0;
  int fallbacks = 0;
  std::vector<double> tick_seconds;
};

/// Receding-horizon run with the ego on mpc_step and the partner on `partner`.
ClosedLoopLog simulate_closed_loop(const GameSpec& game, const EquilibriumSet& modes, const PartnerPolicy& partner,
                                   const MpcConfig& cfg, const RefinerConfig& refiner, double dstar,
                                   std::optional<Vec> initial_state = std::nullopt);

/// Euclidean distance between two agents' planar positions.
double agent_distance(const Vec& joint_state, const AgentBlock& a, const AgentBlock& b);

}  // namespace nashmodes
