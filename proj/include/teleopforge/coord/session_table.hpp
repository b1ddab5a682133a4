#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace teleopforge::coord {

enum class SessionStatus { starting, live, closed };
std::string to_string(SessionStatus s);

struct SessionDescriptor {
  std::string session_id;
  std::string user;
  std::string task;
  std::string endpoint;  // host:port of the teleop server
  std::string token;
  double created_at = 0.0;      // ms
  double last_heartbeat = 0.0;  // ms
  SessionStatus status = SessionStatus::starting;
};

/// 128 random bits, hex encoded.
std::string random_token();

/// Thread-safe registry of sessions with a capacity bound. Time is passed
/// in by the caller so tests can drive it.
class SessionTable {
 public:
  explicit SessionTable(std::size_t max_sessions, double heartbeat_timeout_ms = 15000.0);

  /// Claims a slot (status starting) or returns nullopt at capacity.
  std::optional<SessionDescriptor> reserve(const std::string& user, const std::string& task, double now_ms);
  /// starting → live once the teleop server is reachable.
  bool activate(const std::string& session_id, const std::string& endpoint);
  /// Closes a session and frees its slot; returns the closed descriptor.
  std::optional<SessionDescriptor> close(const std::string& session_id);
  bool heartbeat(const std::string& session_id, double now_ms);
  /// Closes every session silent for longer than the timeout.
  std::vector<SessionDescriptor> reap(double now_ms);

  std::size_t live_count() const;
  std::size_t capacity() const { return max_; }
  std::vector<SessionDescriptor> sessions() const;
  std::optional<SessionDescriptor> find(const std::string& session_id) const;

 private:
  mutable std::mutex mu_;
  std::size_t max_;
  double timeout_ms_;
  std::vector<SessionDescriptor> sessions_;  // open ones only
};

}  // namespace teleopforge::coord
