#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "teleopforge/coord/session_table.hpp"
#include "teleopforge/coord/spawner.hpp"
#include "teleopforge/transport/channel.hpp"

namespace teleopforge::coord {

struct CoordinatorOptions {
  std::uint16_t port = 0;
  std::string bind = "127.0.0.1";
  std::string advertise_host = "127.0.0.1";  // host placed in SESSION endpoints
  std::size_t max_sessions = 4;
  std::filesystem::path storage = "demos";
  std::shared_ptr<Spawner> spawner;
  double heartbeat_timeout_ms = 15000.0;
  std::chrono::milliseconds reap_interval{1000};
  std::function<void(const std::string&)> log;
};

/// Control-port server: answers JOIN with a fresh teleop server, collects
/// heartbeats from those servers, and reaps sessions that go silent or die.
/// It never relays session traffic.
class Coordinator {
 public:
  explicit Coordinator(CoordinatorOptions options);
  ~Coordinator();
  Coordinator(const Coordinator&) = delete;
  Coordinator& operator=(const Coordinator&) = delete;

  std::uint16_t port() const { return port_; }
  std::string endpoint() const;
  void stop();
  /// Blocks until stop() (from another thread or a signal handler via request_stop).
  void wait();

  const SessionTable& table() const { return table_; }
  std::uint64_t joins_served() const { return joins_.load(); }
  std::uint64_t joins_refused() const { return refused_.load(); }
  /// Forcibly ends a session's server (the reaper then closes the session).
  bool kill(const std::string& session_id);

 private:
  void accept_loop();
  void handle(transport::Channel& ch);
  void on_join(transport::Channel& ch, const transport::JoinRequest& req);
  void reap_loop();
  void log(const std::string& m) const;

  CoordinatorOptions options_;
  SessionTable table_;
  transport::Listener listener_;
  std::uint16_t port_;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::thread reaper_;

  struct Worker {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> finished;
  };
  std::mutex workers_mu_;
  std::list<Worker> workers_;

  std::mutex handles_mu_;
  std::map<std::string, std::unique_ptr<SessionHandle>> handles_;
  std::mutex wait_mu_;
  std::condition_variable wait_cv_;
  std::atomic<std::uint64_t> joins_{0};
  std::atomic<std::uint64_t> refused_{0};
};

}  // namespace teleopforge::coord
