#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "teleopforge/teleop/engine.hpp"
#include "teleopforge/transport/channel.hpp"

namespace teleopforge::teleop {

inline constexpr std::chrono::seconds kHeartbeatPeriod{5};
inline constexpr std::chrono::seconds kHeartbeatTimeout{15};

struct ServerOptions {
  SessionConfig session;
  std::uint16_t port = 0;
  std::string bind = "127.0.0.1";
  std::string token;        // expected in the client's HELLO; empty accepts anyone
  std::string session_id;   // echoed in HELLO and sent in heartbeats
  std::string coordinator;  // host:port to heartbeat, empty for none
  bool headless = false;
  std::chrono::milliseconds accept_timeout{60000};
  std::size_t outbound_limit = 256;
  std::function<void(const std::string&)> log;
};

struct ServerReport {
  bool client_connected = false;
  std::string end_reason;
  std::uint64_t ticks = 0;
  std::uint64_t successes = 0;
  std::uint64_t failures = 0;
  std::uint64_t commands_accepted = 0;
  std::uint64_t commands_dropped = 0;
  std::uint64_t frames_sent = 0;
  std::uint64_t outbound_dropped = 0;
  std::vector<std::filesystem::path> demos;
};

/// One user's teleoperation server: accepts a single authenticated client
/// and runs the control loop until the client goes away or stop() is called.
class TeleopServer {
 public:
  explicit TeleopServer(ServerOptions options);
  ~TeleopServer();

  /// Already listening once constructed.
  std::uint16_t port() const { return listener_.port(); }
  ServerReport run();
  void stop() { stop_ = true; }

 private:
  void log(const std::string& msg) const;

  ServerOptions options_;
  transport::Listener listener_;
  std::atomic<bool> stop_{false};
};

}  // namespace teleopforge::teleop
