#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "teleopforge/transport/messages.hpp"

namespace teleopforge::transport {

using namespace std::chrono_literals;

struct ChannelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Full-duplex WebSocket endpoint carrying one encoded Message per binary
/// frame. Sends are queued and never block; receives block with a timeout.
/// Send and receive may be called from different threads.
class Channel {
 public:
  ~Channel();
  Channel(const Channel&) = delete;
  Channel& operator=(const Channel&) = delete;

  /// Throws ChannelError if the connection or handshake fails within `timeout`.
  static std::unique_ptr<Channel> connect(const std::string& host, std::uint16_t port,
                                          std::chrono::milliseconds timeout = 5s);

  void send_bytes(std::vector<std::uint8_t> frame);
  void send(const Message& m) { send_bytes(encode(m)); }

  /// nullopt on timeout or once the channel is closed and drained.
  std::optional<std::vector<std::uint8_t>> receive_bytes(std::chrono::milliseconds timeout);
  /// As receive_bytes, decoded. Throws WireError on a malformed frame.
  std::optional<Message> receive(std::chrono::milliseconds timeout);

  bool is_open() const;
  /// Flushes queued frames (bounded wait) and performs the closing handshake.
  void close();

  /// Bound on queued outbound frames; the oldest queued frame is dropped when exceeded.
  void set_outbound_limit(std::size_t frames);
  std::uint64_t outbound_dropped() const;
  std::uint64_t bytes_sent() const;
  std::uint64_t bytes_received() const;

  struct Impl;

 private:
  explicit Channel(std::unique_ptr<Impl> impl);
  friend class Listener;
  std::unique_ptr<Impl> impl_;
};

/// Accepts WebSocket connections on a TCP port (0 picks an ephemeral port).
class Listener {
 public:
  explicit Listener(std::uint16_t port, const std::string& bind_address = "127.0.0.1");
  ~Listener();
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

  std::uint16_t port() const;
  /// nullptr on timeout, on a failed handshake, or after close().
  std::unique_ptr<Channel> accept(std::chrono::milliseconds timeout);
  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// "host:port" → pair. Throws std::invalid_argument.
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint);

double wall_clock_ms();

}  // namespace teleopforge::transport
