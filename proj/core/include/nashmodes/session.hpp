#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "nashmodes/io.hpp"
#include "nashmodes/planner.hpp"

namespace nashmodes {

inline constexpr int kWireVersion = 1;

enum class SessionStatus { Waiting, Running, Finished, Collided };

std::string to_string(SessionStatus status);

/// Computes the modes for a scenario; the default runs multinash_pf once per scenario.
using ModeSource = std::function<EquilibriumSet(const std::string& scenario, const GameSpec& game)>;

struct SessionConfig {
  std::string scenario = "head_on";
  PipelineConfig pipeline;
  MpcConfig mpc;
  RefinerConfig refiner = default_mpc_refiner();
  double dstar = 1.0;
  ModeSource modes;  // empty: multinash_pf with `pipeline`
};

struct SessionState {
  std::string id;
  std::string scenario;
  GameSpec game;
  EquilibriumSet modes;
  int t = 0;
  Vec state;  // joint state of both agents
  ModeBelief belief;
  Polyline observed;  // human positions 0..t
  UnicycleInput human_input;
  SessionStatus status = SessionStatus::Waiting;
  std::optional<MpcPlan> plan;
  bool fallback = false;  // the last tick ran on the shifted previous plan
  std::string note;
  int overruns = 0;
  double r_col = 0.0;
  Eigen::Vector2d human_bound{0.0, 0.0};
};

/// Builds the scenario, computes its modes once, and places both agents at their starts.
SessionState make_session(const std::string& id, const std::string& scenario, const SessionConfig& cfg);

/// Snapshot frame with everything a client needs to draw the current frame.
Json state_snapshot(const SessionState& s, const SessionConfig& cfg);
Json error_frame(const std::string& message);

/// One simulation step. Rejected with an error frame unless the session is running.
Json session_tick(SessionState& s, const SessionConfig& cfg);

/// Applies one inbound text frame. On any schema violation the state is left untouched
/// and the error frame is returned; otherwise returns nothing.
std::optional<Json> handle_client_message(SessionState& s, const std::string& text, const SessionConfig& cfg);

/// Session with an inbound queue applied at tick boundaries. Thread-safe.
class Session {
 public:
  Session(std::string id, SessionConfig cfg);

  void enqueue(std::string text);
  /// Applies queued messages, then ticks when running. Returns the outbound frames in
  /// order: error frames, then one snapshot.
  std::vector<Json> step();
  Json snapshot() const;
  SessionState state() const;

 private:
  SessionConfig cfg_;
  SessionState state_;
  std::deque<std::string> inbox_;
  mutable std::mutex mutex_;
};

}  // namespace nashmodes
