#include "nashmodes/session.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "nashmodes/errors.hpp"
#include "nashmodes/scenarios.hpp"

namespace nashmodes {

namespace {

Json point(double p, double q) { return {{"p", p}, {"q", q}}; }

Json agent_json(const Vec& x, const AgentBlock& b) {
  const UnicycleState s = UnicycleState::from_vec(x.segment(b.state_offset, 5));
  return {{"p", s.p}, {"q", s.q}, {"theta", s.theta}, {"nu", s.nu}, {"omega", s.omega}};
}

double param(const GameSpec& game, const std::string& key, std::size_t index) {
  const auto it = game.constraint_params.find(key);
  if (it == game.constraint_params.end() || it->second.size() <= index)
    throw ConfigError("scenario lacks constraint parameter " + key);
  return it->second[index];
}

double number_field(const Json& msg, const char* key) {
  const auto it = msg.find(key);
  if (it == msg.end()) throw ConfigError(std::string("missing field ") + key);
  if (!it->is_number()) throw ConfigError(std::string("field ") + key + " must be a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw ConfigError(std::string("field ") + key + " must be finite");
  return v;
}

void restart(SessionState& s, const SessionConfig& cfg) {
  const AgentBlock human = agent_blocks(s.game).at(cfg.mpc.partner);
  s.t = 0;
  s.state = s.game.x0;
  s.observed = {s.state.segment(human.state_offset, 2)};
  ModeBelief fresh;
  fresh.dstar = s.belief.dstar;
  s.belief = mode_belief_update(fresh, s.observed, s.modes, human, 0);
  s.human_input = {};
  s.plan.reset();
  s.fallback = false;
  s.note.clear();
  s.overruns = 0;
}

}  // namespace

std::string to_string(SessionStatus status) {
  switch (status) {
    case SessionStatus::Waiting:
      return "waiting";
    case SessionStatus::Running:
      return "running";
    case SessionStatus::Finished:
      return "finished";
    case SessionStatus::Collided:
      return "collided";
  }
  return "unknown";
}

SessionState make_session(const std::string& id, const std::string& scenario, const SessionConfig& cfg) {
  validate(cfg.mpc);
  SessionState s;
  s.id = id;
  s.scenario = scenario;
  s.game = build_scenario(scenario_preset(scenario));
  if (std::abs(cfg.mpc.dt - s.game.dt) > 1e-12) throw ConfigError("session dt must match the scenario step");
  s.modes = cfg.modes ? cfg.modes(scenario, s.game) : multinash_pf(s.game, cfg.pipeline);
  if (s.modes.modes.empty()) throw NumericError("no equilibrium modes for scenario " + scenario);
  s.r_col = param(s.game, "r_col", 0);
  const std::string bound_key = "u_bound_" + std::to_string(cfg.mpc.partner + 1);
  s.human_bound = {param(s.game, bound_key, 0), param(s.game, bound_key, 1)};
  s.belief.dstar = cfg.dstar;
  restart(s, cfg);
  s.status = SessionStatus::Waiting;
  return s;
}

Json error_frame(const std::string& message) {
  return {{"v", kWireVersion}, {"type", "error"}, {"message", message}};
}

Json state_snapshot(const SessionState& s, const SessionConfig& cfg) {
  const auto blocks = agent_blocks(s.game);
  Json agents = Json::array();
  for (const auto& b : blocks) agents.push_back(agent_json(s.state, b));

  Json modes = Json::array();
  for (const auto& m : s.modes.modes) {
    Json per_agent = Json::array();
    for (const auto& b : blocks) {
      Json line = Json::array();
      for (const auto& x : m.trajectory.states) line.push_back(point(x[b.state_offset], x[b.state_offset + 1]));
      per_agent.push_back(std::move(line));
    }
    modes.push_back(std::move(per_agent));
  }

  Json plan = Json::array();
  if (s.plan) {
    const AgentBlock& ego = blocks.at(cfg.mpc.ego);
    for (const auto& x : s.plan->plan.states) plan.push_back(point(x[ego.state_offset], x[ego.state_offset + 1]));
  }

  Json belief = {{"d", s.belief.distances},
                 {"locked", s.belief.is_locked() ? Json(s.belief.locked) : Json(nullptr)},
                 {"dstar", s.belief.dstar},
                 {"selected", s.belief.selected()}};

  Json out = {{"v", kWireVersion},
              {"type", "state"},
              {"session", s.id},
              {"scenario", s.scenario},
              {"t", s.t},
              {"dt", s.game.dt},
              {"ego", cfg.mpc.ego},
              {"human", cfg.mpc.partner},
              {"r_col", s.r_col},
              {"agents", std::move(agents)},
              {"modes", std::move(modes)},
              {"belief", std::move(belief)},
              {"plan", std::move(plan)},
              {"input", {{"dnu", s.human_input.dnu}, {"domega", s.human_input.domega}}},
              {"status", to_string(s.status)},
              {"fallback", s.fallback},
              {"overruns", s.overruns}};
  if (const auto it = s.game.constraint_params.find("x_obs"); it != s.game.constraint_params.end())
    out["obstacle"] = {{"p", it->second.at(0)}, {"q", it->second.at(1)}, {"r", param(s.game, "r_obs", 0)}};
  if (!s.note.empty()) out["note"] = s.note;
  return out;
}

Json session_tick(SessionState& s, const SessionConfig& cfg) {
  if (s.status != SessionStatus::Running) return error_frame("tick rejected: session is " + to_string(s.status));
  const auto start = std::chrono::steady_clock::now();
  const auto blocks = agent_blocks(s.game);
  const AgentBlock& ego = blocks.at(cfg.mpc.ego);
  const AgentBlock& human = blocks.at(cfg.mpc.partner);

  MpcPlan next;
  try {
    next = plan_tick(s.game, s.modes, s.belief, s.state, s.t, cfg.mpc, cfg.refiner, s.plan ? &*s.plan : nullptr);
  } catch (const NumericError& e) {
    // Only reachable without a previous plan: hold the ego's speeds for this tick.
    next.ego_control = Vec::Zero(ego.input_dim);
    next.fallback = true;
    next.note = e.what();
  }

  Vec x = s.state;
  const UnicycleState ego_now = UnicycleState::from_vec(s.state.segment(ego.state_offset, 5));
  const UnicycleState human_now = UnicycleState::from_vec(s.state.segment(human.state_offset, 5));
  x.segment(ego.state_offset, 5) =
      unicycle_step(ego_now, {next.ego_control[0], next.ego_control[1]}, s.game.dt).to_vec();
  x.segment(human.state_offset, 5) = unicycle_step(human_now, s.human_input, s.game.dt).to_vec();

  s.state = std::move(x);
  s.t += 1;
  s.observed.push_back(s.state.segment(human.state_offset, 2));
  s.belief = mode_belief_update(s.belief, s.observed, s.modes, human, s.t);
  s.fallback = next.fallback;
  s.note = next.note;
  if (!next.plan.states.empty()) s.plan = std::move(next);

  if (agent_distance(s.state, ego, human) < s.r_col)
    s.status = SessionStatus::Collided;
  else if (s.t >= cfg.mpc.total_steps())
    s.status = SessionStatus::Finished;
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (elapsed > s.game.dt) ++s.overruns;
  return state_snapshot(s, cfg);
}

std::optional<Json> handle_client_message(SessionState& s, const std::string& text, const SessionConfig& cfg) {
  Json msg;
  try {
    msg = Json::parse(text);
  } catch (const Json::exception& e) {
    return error_frame(std::string("malformed frame: ") + e.what());
  }
  try {
    if (!msg.is_object()) throw ConfigError("frame must be a JSON object");
    const auto v = msg.find("v");
    if (v == msg.end() || !v->is_number_integer() || v->get<int>() != kWireVersion)
      throw ConfigError("unsupported or missing wire version v (expected " + std::to_string(kWireVersion) + ")");
    const auto type_it = msg.find("type");
    if (type_it == msg.end() || !type_it->is_string()) throw ConfigError("missing message type");
    const std::string type = type_it->get<std::string>();

    if (type == "input") {
      const double dnu = number_field(msg, "dnu");
      const double domega = number_field(msg, "domega");
      s.human_input.dnu = std::clamp(dnu, -s.human_bound.x(), s.human_bound.x());
      s.human_input.domega = std::clamp(domega, -s.human_bound.y(), s.human_bound.y());
      if (s.status == SessionStatus::Waiting) s.status = SessionStatus::Running;
    } else if (type == "reset") {
      restart(s, cfg);
      s.status = SessionStatus::Running;
    } else if (type == "set_dstar") {
      const double value = number_field(msg, "value");
      if (value < 0) throw ConfigError("d* must be non-negative");
      s.belief.dstar = value;
    } else if (type == "select_scenario") {
      const auto name = msg.find("name");
      if (name == msg.end() || !name->is_string()) throw ConfigError("select_scenario needs a string name");
      SessionState fresh = make_session(s.id, name->get<std::string>(), cfg);
      fresh.belief.dstar = s.belief.dstar;
      s = std::move(fresh);
    } else {
      throw ConfigError("unknown message type " + type);
    }
  } catch (const std::runtime_error& e) {
    return error_frame(e.what());
  }
  return std::nullopt;
}

Session::Session(std::string id, SessionConfig cfg)
    : cfg_(std::move(cfg)), state_(make_session(id, cfg_.scenario, cfg_)) {}

void Session::enqueue(std::string text) {
  std::lock_guard lock(mutex_);
  inbox_.push_back(std::move(text));
}

std::vector<Json> Session::step() {
  std::lock_guard lock(mutex_);
  std::vector<Json> out;
  while (!inbox_.empty()) {
    const std::string text = std::move(inbox_.front());
    inbox_.pop_front();
    if (auto reply = handle_client_message(state_, text, cfg_)) out.push_back(std::move(*reply));
  }
  if (state_.status == SessionStatus::Running)
    out.push_back(session_tick(state_, cfg_));
  else
    out.push_back(state_snapshot(state_, cfg_));
  return out;
}

Json Session::snapshot() const {
  std::lock_guard lock(mutex_);
  return state_snapshot(state_, cfg_);
}

SessionState Session::state() const {
  std::lock_guard lock(mutex_);
  return state_;
}

}  // namespace nashmodes
