#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace teleopforge::coord {

struct SpawnRequest {
  std::string session_id;
  std::string user;
  std::string task;
  std::string token;
  std::filesystem::path storage;
  std::string coordinator;  // host:port the server heartbeats to
};

/// A running teleop server.
class SessionHandle {
 public:
  virtual ~SessionHandle() = default;
  virtual bool alive() = 0;
  /// Idempotent; blocks until the server is gone.
  virtual void terminate() = 0;
  virtual std::uint16_t port() const = 0;
};

class Spawner {
 public:
  virtual ~Spawner() = default;
  /// Starts a teleop server already listening when this returns. Throws on failure.
  virtual std::unique_ptr<SessionHandle> spawn(const SpawnRequest& request) = 0;
};

/// Runs `<executable> teleop --port 0 ...` per session; the child reports its
/// port as "LISTENING <port>" on stdout.
class ProcessSpawner : public Spawner {
 public:
  explicit ProcessSpawner(std::filesystem::path executable, std::vector<std::string> extra_args = {});
  std::unique_ptr<SessionHandle> spawn(const SpawnRequest& request) override;

 private:
  std::filesystem::path executable_;
  std::vector<std::string> extra_args_;
};

/// Teleop servers as threads of this process (--single-process).
class InProcessSpawner : public Spawner {
 public:
  explicit InProcessSpawner(bool headless = false, std::function<void(const std::string&)> log = {});
  std::unique_ptr<SessionHandle> spawn(const SpawnRequest& request) override;

 private:
  bool headless_;
  std::function<void(const std::string&)> log_;
};

/// The running binary, for spawning copies of itself.
std::filesystem::path self_executable();

}  // namespace teleopforge::coord
