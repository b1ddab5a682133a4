#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include "teleopforge/transport/messages.hpp"

namespace teleopforge::teleop {

/// The coordinator answered a JOIN with ERROR.
struct JoinError : std::runtime_error {
  JoinError(transport::ErrorCode c, const std::string& what) : std::runtime_error(what), code(c) {}
  transport::ErrorCode code;
};

/// JOIN over a fresh control connection. Throws JoinError, or
/// transport::ChannelError when the coordinator is unreachable.
transport::SessionInfo join(const std::string& coordinator, const std::string& user, const std::string& task,
                            std::chrono::milliseconds timeout = std::chrono::seconds(20));

/// Open-loop timed waypoints for lifting, with the gripper close gated on the
/// arm having arrived and the lift gated on the grasp being reported.
class LiftingScript {
 public:
  LiftingScript(const transport::StateFrame& first, double command_hz, double speed);

  /// Next command given the newest frame seen so far.
  transport::PoseCommand next(const transport::StateFrame& latest, double client_timestamp);
  bool lifted() const { return phase_ == Phase::hold; }

 private:
  enum class Phase { approach, descend, settle, grasp, lift, hold };
  bool move_toward(const Eigen::Vector3d& goal);

  transport::PoseCommand cmd_;
  Phase phase_ = Phase::approach;
  Eigen::Vector3d above_, at_, lifted_;
  double step_;
};

struct ClientOptions {
  std::string coordinator = "127.0.0.1:7000";
  std::string user = "scripted";
  std::string task = "lifting";
  double command_hz = 60.0;
  double speed = 0.15;  // m/s of the streamed controller pose
  std::chrono::milliseconds timeout{90000};
  /// Maps the advertised teleop endpoint to the one actually dialed (e.g. through a proxy).
  std::function<std::string(const std::string&)> resolve;
  std::function<void(const std::string&)> log;
};

struct DelayStats {
  std::size_t n = 0;
  double mean = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
  double max = 0.0;
};

DelayStats delay_stats(std::vector<double> samples);

struct ClientReport {
  bool success = false;
  std::string error;
  std::string session_id;
  std::string endpoint;
  double completion_time = 0.0;  // s, server ticks × dt
  double wall_time = 0.0;        // s from JOIN to DEMO_DONE
  DelayStats uplink;             // command receipt − client send (ms)
  DelayStats downlink;           // client receipt − frame production (ms)
  std::uint64_t commands_sent = 0;
  std::uint64_t frames_received = 0;
  std::uint64_t frames_missed = 0;
  std::uint64_t haptic_events = 0;
  std::string demo_path;
};

/// Joins, then solves lifting by streaming a timed waypoint script at
/// command_hz: above the cube, down to it, close once the arm has arrived,
/// lift once the grasp is confirmed.
ClientReport run_scripted_client(const ClientOptions& options);

}  // namespace teleopforge::teleop
