#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "nashmodes/errors.hpp"
#include "nashmodes/scenarios.hpp"
#include "nashmodes/session.hpp"

namespace nashmodes {
namespace {

/// Modes computed once per scenario and shared by every session in this suite.
const EquilibriumSet& cached_modes(const std::string& scenario, const GameSpec& game) {
  static std::map<std::string, EquilibriumSet> cache;
  auto it = cache.find(scenario);
  if (it == cache.end()) it = cache.emplace(scenario, multinash_pf(game, {})).first;
  return it->second;
}

SessionConfig test_config() {
  SessionConfig cfg;
  cfg.modes = [](const std::string& scenario, const GameSpec& game) { return cached_modes(scenario, game); };
  return cfg;
}

std::string input_frame(double dnu, double domega) {
  return Json{{"v", 1}, {"type", "input"}, {"dnu", dnu}, {"domega", domega}}.dump();
}

/// Human input that replays mode k's partner controls, zero past the mode's horizon.
UnicycleInput mode_input(const EquilibriumSet& modes, int k, int t) {
  const auto& controls = modes.modes[k].trajectory.controls;
  if (t >= static_cast<int>(controls.size()) - 1) return {};
  return {controls[t][2], controls[t][3]};
}

TEST(Session, StartsWaitingWithCompleteSnapshot) {
  const auto cfg = test_config();
  const auto s = make_session("a", "head_on", cfg);
  EXPECT_EQ(s.status, SessionStatus::Waiting);
  EXPECT_EQ(s.t, 0);
  const Json snap = state_snapshot(s, cfg);
  EXPECT_EQ(snap["v"], 1);
  EXPECT_EQ(snap["type"], "state");
  EXPECT_EQ(snap["t"], 0);
  EXPECT_EQ(snap["status"], "waiting");
  ASSERT_EQ(snap["agents"].size(), 2u);
  for (const char* key : {"p", "q", "theta", "nu", "omega"}) EXPECT_TRUE(snap["agents"][0].contains(key)) << key;
  ASSERT_EQ(snap["modes"].size(), 2u);
  ASSERT_EQ(snap["modes"][0].size(), 2u);
  EXPECT_EQ(snap["modes"][0][1].size(), 61u);
  EXPECT_TRUE(snap["modes"][0][0][0].contains("p"));
  EXPECT_TRUE(snap["belief"]["locked"].is_null());
  EXPECT_EQ(snap["belief"]["d"].size(), 2u);
  EXPECT_EQ(snap["belief"]["dstar"], 1.0);
  EXPECT_TRUE(snap["plan"].empty());
  EXPECT_EQ(snap["overruns"], 0);
  EXPECT_EQ(snap["r_col"], s.r_col);
  EXPECT_FALSE(snap.contains("obstacle"));
}

TEST(Session, ObstacleScenarioSnapshotHasObstacle) {
  const auto cfg = test_config();
  const Json snap = state_snapshot(make_session("b", "obstacle_swap", cfg), cfg);
  EXPECT_EQ(snap["modes"].size(), 6u);
  EXPECT_TRUE(snap["obstacle"].contains("r"));
}

TEST(Session, TickRejectedUnlessRunning) {
  const auto cfg = test_config();
  auto s = make_session("c", "head_on", cfg);
  const Json reply = session_tick(s, cfg);
  EXPECT_EQ(reply["type"], "error");
  EXPECT_EQ(s.t, 0);
  s.status = SessionStatus::Finished;
  EXPECT_EQ(session_tick(s, cfg)["type"], "error");
  EXPECT_EQ(s.t, 0);
}

TEST(Session, InputIsClampedToTheBound) {
  const auto cfg = test_config();
  auto s = make_session("d", "head_on", cfg);
  EXPECT_FALSE(handle_client_message(s, input_frame(1e3, -1e3), cfg));
  EXPECT_EQ(s.human_input.dnu, s.human_bound.x());
  EXPECT_EQ(s.human_input.domega, -s.human_bound.y());
  EXPECT_EQ(s.status, SessionStatus::Running);
  EXPECT_FALSE(handle_client_message(s, input_frame(0.1, 0.05), cfg));
  EXPECT_EQ(s.human_input.dnu, 0.1);
  EXPECT_EQ(s.human_input.domega, 0.05);
}

TEST(Session, MalformedFramesLeaveStateUntouched) {
  const auto cfg = test_config();
  auto s = make_session("e", "head_on", cfg);
  handle_client_message(s, input_frame(0.1, 0.0), cfg);
  session_tick(s, cfg);
  const Json before = state_snapshot(s, cfg);
  const std::vector<std::string> bad{
      "not json",
      "[1, 2]",
      R"({"type": "input", "dnu": 0, "domega": 0})",
      R"({"v": 2, "type": "input", "dnu": 0, "domega": 0})",
      R"({"v": 1.5, "type": "reset"})",
      R"({"v": "1", "type": "reset"})",
      R"({"v": 1})",
      R"({"v": 1, "type": "jump"})",
      R"({"v": 1, "type": "input", "dnu": 0})",
      R"({"v": 1, "type": "input", "dnu": "fast", "domega": 0})",
      R"({"v": 1, "type": "set_dstar"})",
      R"({"v": 1, "type": "set_dstar", "value": -1})",
      R"({"v": 1, "type": "select_scenario"})",
      R"({"v": 1, "type": "select_scenario", "name": "roundabout"})",
  };
  for (const auto& text : bad) {
    const auto reply = handle_client_message(s, text, cfg);
    ASSERT_TRUE(reply) << text;
    EXPECT_EQ((*reply)["type"], "error") << text;
    EXPECT_EQ((*reply)["v"], 1);
    EXPECT_EQ(state_snapshot(s, cfg), before) << text;
  }
}

TEST(Session, SetDstarAppliesToTheNextLock) {
  const auto cfg = test_config();
  auto s = make_session("f", "head_on", cfg);
  handle_client_message(s, input_frame(0.0, 0.0), cfg);
  for (int k = 0; k < 3; ++k) session_tick(s, cfg);
  EXPECT_FALSE(handle_client_message(s, R"({"v": 1, "type": "set_dstar", "value": 0.2})", cfg));
  EXPECT_EQ(state_snapshot(s, cfg)["belief"]["dstar"], 0.2);
  for (int t = 3; t < 60 && !s.belief.is_locked(); ++t) {
    const auto in = mode_input(s.modes, 0, s.t);
    handle_client_message(s, input_frame(in.dnu, in.domega), cfg);
    session_tick(s, cfg);
  }
  ASSERT_TRUE(s.belief.is_locked());
  auto d = s.belief.distances;
  std::sort(d.begin(), d.end());
  EXPECT_GT(d[1] - d[0], 0.2);
  EXPECT_LE(d[1] - d[0], 1.0);
}

TEST(Session, ResetAfterCollision) {
  const auto cfg = test_config();
  auto s = make_session("g", "head_on", cfg);
  handle_client_message(s, input_frame(0.0, 0.0), cfg);
  const auto blocks = agent_blocks(s.game);
  // Teleport the human next to the ego.
  s.state.segment(blocks[1].state_offset, 2) = s.state.segment(blocks[0].state_offset, 2) + Eigen::Vector2d(1.0, 0.0);
  session_tick(s, cfg);
  EXPECT_EQ(s.status, SessionStatus::Collided);
  EXPECT_EQ(session_tick(s, cfg)["type"], "error");

  EXPECT_FALSE(handle_client_message(s, R"({"v": 1, "type": "reset"})", cfg));
  EXPECT_EQ(s.status, SessionStatus::Running);
  EXPECT_EQ(s.t, 0);
  EXPECT_EQ(s.state, s.game.x0);
  EXPECT_FALSE(s.belief.is_locked());
  EXPECT_EQ(s.observed.size(), 1u);
  EXPECT_FALSE(s.plan);
}

TEST(Session, SelectScenarioRebuildsAndKeepsDstar) {
  const auto cfg = test_config();
  auto s = make_session("h", "head_on", cfg);
  handle_client_message(s, R"({"v": 1, "type": "set_dstar", "value": 0.7})", cfg);
  EXPECT_FALSE(handle_client_message(s, R"({"v": 1, "type": "select_scenario", "name": "obstacle_swap"})", cfg));
  EXPECT_EQ(s.scenario, "obstacle_swap");
  EXPECT_EQ(s.modes.modes.size(), 6u);
  EXPECT_EQ(s.belief.dstar, 0.7);
  EXPECT_EQ(s.id, "h");
  EXPECT_EQ(s.status, SessionStatus::Waiting);
}

TEST(Session, StationaryHumanEgoProgressesSafely) {
  const auto cfg = test_config();
  auto s = make_session("i", "head_on", cfg);
  handle_client_message(s, input_frame(0.0, 0.0), cfg);
  const auto blocks = agent_blocks(s.game);
  s.state[blocks[1].state_offset + 3] = 0.0;  // human at rest
  const Vec human_start = s.state.segment(blocks[1].state_offset, 5);
  const double ego_start = s.state[0];
  double min_distance = agent_distance(s.state, blocks[0], blocks[1]);
  while (s.status == SessionStatus::Running) {
    session_tick(s, cfg);
    min_distance = std::min(min_distance, agent_distance(s.state, blocks[0], blocks[1]));
  }
  EXPECT_EQ(s.status, SessionStatus::Finished);
  EXPECT_EQ(s.t, cfg.mpc.total_steps());
  EXPECT_EQ(Vec(s.state.segment(blocks[1].state_offset, 5)), human_start);
  EXPECT_GE(min_distance, s.r_col - 1e-4);
  EXPECT_GT(s.state[0] - ego_start, 5.0);
}

TEST(Session, ScriptedHumanOnModeLocksAndEgoReachesGoal) {
  const auto cfg = test_config();
  for (int k = 0; k < 2; ++k) {
    auto s = make_session("j", "head_on", cfg);
    int lock_step = -1;
    while (s.t < cfg.mpc.total_steps()) {
      const auto in = mode_input(s.modes, k, s.t);
      handle_client_message(s, input_frame(in.dnu, in.domega), cfg);
      const Json snap = session_tick(s, cfg);
      ASSERT_EQ(snap["type"], "state");
      if (lock_step < 0 && !snap["belief"]["locked"].is_null()) lock_step = snap["t"];
      if (s.status != SessionStatus::Running) break;
    }
    EXPECT_EQ(s.status, SessionStatus::Finished) << "mode " << k;
    EXPECT_EQ(s.belief.locked, k);
    EXPECT_GE(lock_step, 0);
    EXPECT_LT(lock_step, cfg.mpc.total_steps() / 2);
    const Vec goal = s.modes.modes[k].trajectory.states.back().head(2);
    EXPECT_LE((s.state.head(2) - goal).norm(), 0.5) << "mode " << k;
  }
}

TEST(Session, ReplayedInputScriptIsBitwiseDeterministic) {
  const auto cfg = test_config();
  auto run = [&] {
    auto s = make_session("k", "head_on", cfg);
    std::vector<Vec> trace;
    for (int t = 0; t < 40; ++t) {
      handle_client_message(s, input_frame(0.05 * std::sin(0.3 * t), 0.1 * std::cos(0.2 * t)), cfg);
      session_tick(s, cfg);
      trace.push_back(s.state);
    }
    return trace;
  };
  EXPECT_EQ(run(), run());
}

TEST(SessionQueue, AppliesMessagesAtTickBoundaries) {
  Session session("q", test_config());
  session.enqueue("garbage");
  session.enqueue(input_frame(0.0, 0.0));
  auto frames = session.step();
  ASSERT_EQ(frames.size(), 2u);
  EXPECT_EQ(frames[0]["type"], "error");
  EXPECT_EQ(frames[1]["type"], "state");
  EXPECT_EQ(frames[1]["t"], 1);
  frames = session.step();
  ASSERT_EQ(frames.size(), 1u);
  EXPECT_EQ(frames[0]["t"], 2);
  EXPECT_EQ(session.snapshot()["t"], 2);
  EXPECT_EQ(session.state().t, 2);
}

TEST(SessionQueue, WaitingSessionOnlySnapshots) {
  Session session("w", test_config());
  const auto frames = session.step();
  ASSERT_EQ(frames.size(), 1u);
  EXPECT_EQ(frames[0]["status"], "waiting");
  EXPECT_EQ(frames[0]["t"], 0);
}

}  // namespace
}  // namespace nashmodes
