#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "nashmodes/session.hpp"

namespace nashmodes {

struct ServerConfig {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  int threads = 2;
  double tick_scale = 1.0;  // wall seconds per simulated second
  SessionConfig session;
};

/// Modes are computed once per scenario and shared by every session.
class ModeCache {
 public:
  explicit ModeCache(PipelineConfig pipeline);
  EquilibriumSet get(const std::string& scenario, const GameSpec& game);

 private:
  PipelineConfig pipeline_;
  std::map<std::string, EquilibriumSet> cache_;
  std::mutex mutex_;
};

/// Websocket host: one session per connection, ticked on a timer at dt * tick_scale.
class SessionServer {
 public:
  explicit SessionServer(ServerConfig cfg);
  ~SessionServer();
  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  /// Binds and starts the worker threads; returns once the socket is listening.
  void start();
  void stop();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  unsigned short port() const { return bound_port_; }

 private:
  struct Impl;
  ServerConfig cfg_;
  std::unique_ptr<Impl> impl_;
  std::shared_ptr<ModeCache> modes_;
  std::vector<std::thread> workers_;
  std::atomic<unsigned short> bound_port_{0};
};

}  // namespace nashmodes
