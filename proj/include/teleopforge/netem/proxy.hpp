#pragma once

#include <atomic>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "teleopforge/netem/shaper.hpp"

namespace teleopforge::netem {

/// TCP forwarder applying the profile's uplink shaping to client→upstream
/// bytes and downlink shaping to upstream→client bytes. A connection whose
/// upstream refuses is closed immediately.
///
/// Unlike LinkShaper on its own, the proxy never drops: a full queue stops
/// reading from the sender, so TCP flow control pushes back instead of
/// corrupting the byte stream.
class Proxy {
 public:
  Proxy(NetworkProfile profile, std::string upstream_host, std::uint16_t upstream_port,
        std::uint16_t listen_port = 0, const std::string& bind_address = "127.0.0.1");
  ~Proxy();
  Proxy(const Proxy&) = delete;
  Proxy& operator=(const Proxy&) = delete;

  std::uint16_t port() const { return port_; }
  const NetworkProfile& profile() const { return profile_; }
  void stop();

  struct Stats {
    std::uint64_t connections = 0;
    std::uint64_t refused = 0;
    std::uint64_t uplink_bytes = 0;
    std::uint64_t downlink_bytes = 0;
  };
  Stats stats() const;

  struct Connection;

 private:
  void accept_loop();
  void reap(bool all);

  NetworkProfile profile_;
  std::string upstream_host_;
  std::uint16_t upstream_port_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::list<std::shared_ptr<Connection>> connections_;
  std::atomic<std::uint64_t> accepted_{0};
  std::atomic<std::uint64_t> refused_{0};
  std::shared_ptr<std::atomic<std::uint64_t>> up_bytes_;
  std::shared_ptr<std::atomic<std::uint64_t>> down_bytes_;
};

}  // namespace teleopforge::netem
