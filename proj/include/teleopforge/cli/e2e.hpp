#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <string>

#include "teleopforge/netem/shaper.hpp"
#include "teleopforge/teleop/client.hpp"

namespace teleopforge::cli {

struct E2eOptions {
  netem::NetworkProfile profile;
  std::string task = "lifting";
  std::filesystem::path storage;
  /// Binary spawned as `<exe> teleop ...` per session; empty runs the
  /// teleop servers as threads instead.
  std::filesystem::path teleop_executable;
  std::chrono::milliseconds timeout{90000};
  std::function<void(const std::string&)> log;
};

struct E2eReport {
  std::string profile;
  teleop::ClientReport client;
  std::size_t demos_before = 0;
  std::size_t demos_after = 0;
  std::uint64_t proxied_connections = 0;
  std::uint64_t uplink_bytes = 0;
  std::uint64_t downlink_bytes = 0;
  std::uint64_t joins_served = 0;
  bool success = false;
  std::string failure;  // first failed assertion, empty on success
};

/// Coordinator, a netem proxy in front of it and one in front of every teleop
/// endpoint it hands out, then the scripted client through both. Succeeds when
/// the client finishes and one more successful demo is stored.
E2eReport run_e2e(const E2eOptions& options);

std::string to_json(const E2eReport& report);

}  // namespace teleopforge::cli
