#include "nashmodes/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "nashmodes/errors.hpp"
#include "nashmodes/frechet.hpp"
#include "nashmodes/io.hpp"
#include "nashmodes/parallel.hpp"
#include "nashmodes/scenarios.hpp"

namespace nashmodes {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool is_unicycle(const AgentBlock& b) { return b.state_dim == 5 && b.input_dim == 2; }

double nominal_speed(const GameSpec& game, int agent) {
  const auto& ref = game.agents[agent].reference.front();
  return ref.size() == 5 ? ref[3] : 0.0;
}

/// Previous plan advanced by one step and re-rolled from the current state.
MpcPlan shift_plan(const MpcPlan& previous, const PotentialProblem& pp, const Vec& state, int ego_offset,
                   int ego_dim) {
  std::vector<Vec> controls;
  const auto& old = previous.plan.controls;
  for (int k = 0; k <= pp.horizon; ++k) {
    const std::size_t idx = std::min<std::size_t>(static_cast<std::size_t>(k) + 1, old.size() - 1);
    controls.push_back(k + 1 < static_cast<int>(old.size()) ? old[idx] : Vec::Zero(pp.input_dim()));
  }
  MpcPlan out = previous;
  out.plan = rollout(pp, state, controls);
  out.ego_control = out.plan.controls.front().segment(ego_offset, ego_dim);
  return out;
}

std::optional<Eigen::Vector2d> control_bound(const GameSpec& game, int agent) {
  const auto it = game.constraint_params.find("u_bound_" + std::to_string(agent + 1));
  if (it == game.constraint_params.end() || it->second.size() != 2) return std::nullopt;
  return Eigen::Vector2d(it->second[0], it->second[1]);
}

}  // namespace

void validate(const PipelineConfig& cfg) {
  validate(cfg.filter);
  validate(cfg.cluster);
  validate(cfg.refiner);
  if (!(cfg.barrier.alpha > 0)) throw ConfigError("barrier alpha must be positive");
  if (!(cfg.slack_weight > 0)) throw ConfigError("slack weight must be positive");
  if (!(cfg.dedup_distance >= 0)) throw ConfigError("dedup distance must be non-negative");
  if (cfg.guide_iterations < 1) throw ConfigError("guide iterations must be >= 1");
}

EquilibriumSet multinash_pf(const GameSpec& game, const PipelineConfig& cfg) {
  validate(cfg);
  const auto pp = std::make_shared<const PotentialProblem>(assemble_potential(game));
  const int c = pp->constraint_dim();
  StageTimings timings;

  auto start = Clock::now();
  const VirtualModel vm = build_virtual_model(pp, cfg.slack_weight * Mat::Identity(c, c), cfg.barrier);
  const FilterResult filtered = run_filter(vm, cfg.filter);
  timings.filter = seconds_since(start);

  start = Clock::now();
  const ModeSet clusters = cluster_modes(filtered.trajectories, filtered.normalized_weights(), pp->blocks, cfg.cluster);
  timings.cluster = seconds_since(start);

  start = Clock::now();
  const int count = static_cast<int>(clusters.clusters.size());
  std::vector<RefinedEquilibrium> refined(count);
  parallel_for(count, cfg.refine_threads, [&](int k) {
    const JointTrajectory guide = track_guide(*pp, clusters.clusters[k].representative, cfg.guide_iterations);
    refined[k] = solve_constrained(*pp, guide, cfg.refiner);
    refined[k].warm_start_id = k;
  });
  timings.refine = seconds_since(start);

  start = Clock::now();
  std::vector<RefinedEquilibrium> converged;
  std::vector<std::string> notes;
  if (filtered.diagnostics.degenerate) notes.push_back(filtered.diagnostics.warning);
  for (auto& eq : refined) {
    if (eq.converged)
      converged.push_back(std::move(eq));
    else
      notes.push_back("refinement of cluster " + std::to_string(eq.warm_start_id) + " did not converge (violation " +
                      std::to_string(eq.max_violation) + ")");
  }
  EquilibriumSet out = dedup_equilibria(converged, pp->blocks, cfg.dedup_distance);
  timings.dedup = seconds_since(start);

  if (static_cast<int>(out.modes.size()) < static_cast<int>(converged.size()))
    notes.push_back(std::to_string(converged.size() - out.modes.size()) + " duplicate refinements merged");
  if (out.modes.empty()) notes.push_back("no refinement converged; the equilibrium set is empty");
  out.diagnostics = std::move(notes);
  out.scenario_hash = game_hash(game);
  out.timings = timings;
  out.clusters = count;
  out.refinements = count;
  return out;
}

void validate(const BaselineConfig& cfg) {
  if (cfg.target_modes < 1) throw ConfigError("baseline target must be >= 1 mode");
  if (cfg.budget < cfg.target_modes) throw ConfigError("baseline budget must be at least the target mode count");
  if (!(cfg.sigma >= 0)) throw ConfigError("baseline sigma must be non-negative");
}

BaselineResult baseline_random_init(const GameSpec& game, const RefinerConfig& refiner, const BaselineConfig& cfg,
                                    const std::vector<JointTrajectory>* targets) {
  validate(cfg);
  const auto start = Clock::now();
  const PotentialProblem pp = assemble_potential(game);
  std::mt19937_64 rng = particle_stream(cfg.seed, 0x6261736cULL);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Polyline> target_lines;
  if (targets)
    for (const auto& t : *targets) target_lines.push_back(joint_position_polyline(t, pp.blocks));
  std::vector<bool> matched(target_lines.size(), false);

  BaselineResult out;
  std::vector<Polyline> found_lines;
  auto done = [&] {
    if (targets) return std::all_of(matched.begin(), matched.end(), [](bool b) { return b; });
    return static_cast<int>(out.modes.modes.size()) >= cfg.target_modes;
  };

  while (!done() && out.invocations < cfg.budget) {
    std::vector<Vec> controls(pp.horizon + 1, Vec::Zero(pp.input_dim()));
    for (auto& u : controls)
      for (Eigen::Index k = 0; k < u.size(); ++k) u[k] = cfg.sigma * normal(rng);
    ++out.invocations;
    RefinedEquilibrium eq;
    try {
      eq = solve_constrained(pp, rollout(pp, pp.x0, controls), refiner);
    } catch (const NumericError& e) {
      out.modes.diagnostics.push_back("draw " + std::to_string(out.invocations) + ": " + e.what());
      continue;
    }
    if (!eq.converged) continue;
    eq.warm_start_id = out.invocations - 1;
    Polyline line = joint_position_polyline(eq.trajectory, pp.blocks);
    for (std::size_t k = 0; k < target_lines.size(); ++k)
      if (!matched[k] && discrete_frechet(line, target_lines[k]) <= cfg.dedup_distance) matched[k] = true;
    bool duplicate = false;
    for (const auto& other : found_lines) {
      if (discrete_frechet(line, other) <= cfg.dedup_distance) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) continue;
    found_lines.push_back(std::move(line));
    out.modes.modes.push_back(std::move(eq));
  }
  std::stable_sort(out.modes.modes.begin(), out.modes.modes.end(),
                   [](const RefinedEquilibrium& a, const RefinedEquilibrium& b) { return a.potential < b.potential; });
  out.exhausted = !done();
  if (out.exhausted) out.modes.diagnostics.push_back("budget exhausted before the target was reached");
  out.modes.refinements = out.invocations;
  out.modes.scenario_hash = game_hash(game);
  out.seconds = seconds_since(start);
  out.modes.timings.refine = out.seconds;
  return out;
}

int ModeBelief::selected() const {
  if (locked >= 0) return locked;
  if (distances.empty()) return 0;
  return static_cast<int>(std::min_element(distances.begin(), distances.end()) - distances.begin());
}

Polyline mode_prefix(const JointTrajectory& mode, const AgentBlock& block, int t) {
  const int last = std::min(t, mode.horizon());
  Polyline out;
  out.reserve(last + 1);
  for (int k = 0; k <= last; ++k) out.push_back(mode.states[k].segment(block.state_offset, 2));
  return out;
}

ModeBelief mode_belief_update(const ModeBelief& belief, const Polyline& observed, const EquilibriumSet& modes,
                              const AgentBlock& partner, int t) {
  if (static_cast<int>(observed.size()) != t + 1) throw ConfigError("observed prefix must hold t + 1 positions");
  if (modes.modes.empty()) throw ConfigError("mode belief needs at least one mode");
  ModeBelief out = belief;
  out.distances.clear();
  for (const auto& mode : modes.modes)
    out.distances.push_back(discrete_frechet(observed, mode_prefix(mode.trajectory, partner, t)));
  if (out.is_locked()) return out;
  if (out.distances.size() == 1) {
    out.locked = 0;
    out.lock_step = t;
    return out;
  }
  std::vector<double> sorted = out.distances;
  std::partial_sort(sorted.begin(), sorted.begin() + 2, sorted.end());
  if (sorted[1] - sorted[0] > out.dstar) {
    out.locked = out.selected();
    out.lock_step = t;
  }
  return out;
}

int MpcConfig::horizon_steps() const { return static_cast<int>(std::lround(horizon_s / dt)); }
int MpcConfig::total_steps() const { return static_cast<int>(std::lround(total_s / dt)); }

void validate(const MpcConfig& cfg) {
  if (!(cfg.dt > 0)) throw ConfigError("MPC dt must be positive");
  if (cfg.horizon_steps() < 1) throw ConfigError("MPC horizon must cover at least one step");
  if (cfg.horizon_s > cfg.total_s + 1e-12) throw ConfigError("MPC horizon must not exceed the interaction time");
  if (cfg.replan_period < 1) throw ConfigError("replan period must be >= 1");
  if (!(cfg.tentative_speed_cap > 0 && cfg.tentative_speed_cap <= 1)) throw ConfigError("speed cap must lie in (0, 1]");
  if (cfg.ego == cfg.partner) throw ConfigError("ego and partner must differ");
  if (!(cfg.partner_effort_scale > 0)) throw ConfigError("partner effort scale must be positive");
  if (!(cfg.collision_margin >= 0)) throw ConfigError("collision margin must be non-negative");
}

RefinerConfig default_mpc_refiner() {
  RefinerConfig cfg;
  cfg.outer_iterations = 8;
  cfg.inner_iterations = 30;
  cfg.stationarity_tol = 1e-4;
  return cfg;
}

std::vector<Vec> mode_window(const JointTrajectory& mode, int t, int steps, const std::vector<AgentBlock>& blocks) {
  std::vector<Vec> out;
  out.reserve(steps + 1);
  Vec hold = mode.states.back();
  for (const auto& b : blocks)
    if (is_unicycle(b)) hold.segment(b.state_offset + 3, 2).setZero();
  for (int k = 0; k <= steps; ++k) {
    const int idx = t + k;
    out.push_back(idx <= mode.horizon() ? mode.states[idx] : hold);
  }
  return out;
}

MpcPlan mpc_step(const GameSpec& game, const EquilibriumSet& modes, const ModeBelief& belief, const Vec& state, int t,
                 const MpcConfig& cfg, const RefinerConfig& refiner, const MpcPlan* previous) {
  validate(cfg);
  if (modes.modes.empty()) throw ConfigError("MPC needs at least one mode");
  const auto blocks = agent_blocks(game);
  const AgentBlock& ego = blocks.at(cfg.ego);
  const int H = cfg.horizon_steps();

  MpcPlan out;
  out.mode = std::clamp(belief.selected(), 0, static_cast<int>(modes.modes.size()) - 1);
  out.tentative = !belief.is_locked();
  const JointTrajectory& mode = modes.modes[out.mode].trajectory;

  GameSpec window_game = game;
  window_game.horizon = H;
  window_game.dt = cfg.dt;
  window_game.x0 = state;
  const auto window = mode_window(mode, t, H, blocks);
  const double cap = cfg.tentative_speed_cap * nominal_speed(game, cfg.ego);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    auto& ref = window_game.agents[i].reference;
    ref.clear();
    for (const auto& x : window) ref.push_back(x.segment(blocks[i].state_offset, blocks[i].state_dim));
    if (out.tentative && static_cast<int>(i) == cfg.ego && is_unicycle(ego))
      for (auto& r : ref) r[3] = std::min(r[3], cap);
  }
  AgentSpec& other = window_game.agents.at(cfg.partner);
  other.Q.setZero();
  other.Qtau.setZero();
  other.R *= cfg.partner_effort_scale;
  if (auto it = window_game.constraint_params.find("r_col"); it != window_game.constraint_params.end())
    it->second.at(0) += cfg.collision_margin;
  const PotentialProblem pp = assemble_potential(window_game);

  std::vector<Vec> warm;
  if (previous && !previous->plan.controls.empty() && previous->mode == out.mode) {
    warm = shift_plan(*previous, pp, state, ego.input_offset, ego.input_dim).plan.controls;
  } else if (previous && !previous->plan.controls.empty()) {
    // A plan for another mode passes on the wrong side; a soft-start tracking solve toward the
    // new window can cross over where a shifted warm start cannot.
    JointTrajectory guide;
    guide.states = window;
    guide.controls.assign(H + 1, Vec::Zero(pp.input_dim()));
    warm = track_guide(pp, guide).controls;
  } else {
    for (int k = 0; k <= H; ++k)
      warm.push_back(t + k <= mode.horizon() ? mode.controls[t + k] : Vec::Zero(pp.input_dim()));
  }
  const AgentBlock& partner = blocks.at(cfg.partner);
  for (auto& u : warm) u.segment(partner.input_offset, partner.input_dim).setZero();

  bool ok = false;
  try {
    RefinedEquilibrium eq = solve_constrained(pp, rollout(pp, state, warm), refiner);
    ok = eq.max_violation <= cfg.fallback_violation;
    if (ok || !previous) {
      out.plan = std::move(eq.trajectory);
      if (!ok) out.note = "replan left violation " + std::to_string(eq.max_violation);
    }
  } catch (const NumericError& e) {
    out.note = e.what();
    if (!previous) throw;
  }
  if (!ok && previous) {
    MpcPlan shifted = shift_plan(*previous, pp, state, ego.input_offset, ego.input_dim);
    out.plan = std::move(shifted.plan);
    out.fallback = true;
    if (out.note.empty()) out.note = "replan infeasible; previous plan shifted";
  }

  out.ego_control = out.plan.controls.front().segment(ego.input_offset, ego.input_dim);
  if (out.tentative && is_unicycle(ego)) {
    const double speed = state[ego.state_offset + 3];
    out.ego_control[0] = std::min(out.ego_control[0], cap - speed);
  }
  if (const auto bound = control_bound(game, cfg.ego)) {
    out.ego_control[0] = std::clamp(out.ego_control[0], -bound->x(), bound->x());
    out.ego_control[1] = std::clamp(out.ego_control[1], -bound->y(), bound->y());
  }
  return out;
}

MpcPlan plan_tick(const GameSpec& game, const EquilibriumSet& modes, const ModeBelief& belief, const Vec& state, int t,
                  const MpcConfig& cfg, const RefinerConfig& refiner, const MpcPlan* previous) {
  if (!previous || t % cfg.replan_period == 0) return mpc_step(game, modes, belief, state, t, cfg, refiner, previous);
  const AgentBlock ego = agent_blocks(game).at(cfg.ego);
  PotentialProblem wp = assemble_potential(game);
  wp.horizon = cfg.horizon_steps();
  MpcPlan next = shift_plan(*previous, wp, state, ego.input_offset, ego.input_dim);
  next.fallback = false;
  next.note.clear();
  return next;
}

PartnerPolicy follow_mode_partner(const JointTrajectory& mode, const AgentBlock& partner) {
  Vec hold = mode.states.back().segment(partner.state_offset, partner.state_dim);
  if (is_unicycle(partner)) hold.tail(2).setZero();
  return [mode, partner, hold](int t, const Vec&) -> Vec {
    if (t + 1 <= mode.horizon()) return mode.states[t + 1].segment(partner.state_offset, partner.state_dim);
    return hold;
  };
}

PartnerPolicy straight_partner(const AgentBlock& partner, double dt) {
  return [partner, dt](int, const Vec& x) -> Vec {
    const UnicycleState s = UnicycleState::from_vec(x.segment(partner.state_offset, 5));
    return unicycle_step(s, {}, dt).to_vec();
  };
}

PartnerPolicy stationary_partner(const AgentBlock& partner) {
  return [partner](int, const Vec& x) -> Vec {
    Vec s = x.segment(partner.state_offset, partner.state_dim);
    if (is_unicycle(partner)) s.tail(2).setZero();
    return s;
  };
}

double agent_distance(const Vec& joint_state, const AgentBlock& a, const AgentBlock& b) {
  return (joint_state.segment(a.state_offset, 2) - joint_state.segment(b.state_offset, 2)).norm();
}

ClosedLoopLog simulate_closed_loop(const GameSpec& game, const EquilibriumSet& modes, const PartnerPolicy& partner,
                                   const MpcConfig& cfg, const RefinerConfig& refiner, double dstar,
                                   std::optional<Vec> initial_state) {
  validate(cfg);
  if (std::abs(cfg.dt - game.dt) > 1e-12) throw ConfigError("MPC dt must match the game step");
  const auto blocks = agent_blocks(game);
  const AgentBlock& ego = blocks.at(cfg.ego);
  const AgentBlock& other = blocks.at(cfg.partner);
  const PotentialProblem pp = assemble_potential(game);

  ClosedLoopLog log;
  Vec x = initial_state.value_or(game.x0);
  log.states.push_back(x);
  log.min_distance = agent_distance(x, ego, other);

  ModeBelief belief;
  belief.dstar = dstar;
  Polyline observed{x.segment(other.state_offset, 2)};
  belief = mode_belief_update(belief, observed, modes, other, 0);

  std::optional<MpcPlan> plan;
  const int steps = cfg.total_steps();
  for (int t = 0; t < steps; ++t) {
    const auto start = Clock::now();
    MpcPlan next = plan_tick(game, modes, belief, x, t, cfg, refiner, plan ? &*plan : nullptr);
    if (next.fallback) ++log.fallbacks;

    Vec u = Vec::Zero(pp.input_dim());
    u.segment(ego.input_offset, ego.input_dim) = next.ego_control;
    Vec x_next = pp.dynamics->step(x, u, game.dt);
    x_next.segment(other.state_offset, other.state_dim) = partner(t, x);
    x = std::move(x_next);

    observed.push_back(x.segment(other.state_offset, 2));
    belief = mode_belief_update(belief, observed, modes, other, t + 1);
    if (belief.is_locked() && log.lock_step < 0) {
      log.lock_step = belief.lock_step;
      log.locked_mode = belief.locked;
    }
    log.states.push_back(x);
    log.ego_controls.push_back(next.ego_control);
    log.beliefs.push_back(belief);
    log.plans.push_back(next.plan);
    log.min_distance = std::min(log.min_distance, agent_distance(x, ego, other));
    plan = std::move(next);
    log.tick_seconds.push_back(seconds_since(start));
  }
  return log;
}

}  // namespace nashmodes
