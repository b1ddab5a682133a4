#pragma once

#include <cstdint>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "teleopforge/sim/pose.hpp"
#include "teleopforge/sim/simulator.hpp"

namespace teleopforge::transport {

enum class MessageType : std::uint8_t {
  hello = 1,
  join = 2,
  session = 3,
  pose_cmd = 4,
  state_frame = 5,
  haptic_event = 6,
  reset = 7,
  demo_done = 8,
  heartbeat = 9,
  error = 10,
};

inline constexpr std::size_t kMaxPayload = 64 * 1024;
inline constexpr std::size_t kHeaderSize = 5;  // 4-byte length + type

/// Client sends its bearer token; the server answers with the session id.
struct Hello {
  std::string text;
  bool operator==(const Hello&) const = default;
};

/// {"type":"join","user":...,"task":...}
struct JoinRequest {
  std::string user;
  std::string task;
  bool operator==(const JoinRequest&) const = default;
};

/// {"type":"session","session_id":...,"endpoint":...,"token":...}
struct SessionInfo {
  std::string session_id;
  std::string endpoint;  // host:port
  std::string token;
  bool operator==(const SessionInfo&) const = default;
};

struct PoseCommand {
  std::uint64_t seq = 0;
  double client_timestamp = 0.0;  // ms
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
  bool gripper = false;
  bool engaged = false;

  sim::Pose pose() const { return {position, orientation}; }
  bool operator==(const PoseCommand& o) const {
    return seq == o.seq && client_timestamp == o.client_timestamp && position == o.position &&
           orientation.coeffs() == o.orientation.coeffs() && gripper == o.gripper && engaged == o.engaged;
  }
};

struct ObjectFrame {
  std::int32_t id = 0;
  sim::Pose pose;
  bool attached = false;
  bool operator==(const ObjectFrame&) const = default;
};

struct StateFrame {
  std::uint64_t tick = 0;
  double server_timestamp = 0.0;           // ms, when the frame was produced
  double echoed_client_timestamp = 0.0;    // client_timestamp of the last applied command
  double command_received_timestamp = 0.0; // server ms at which that command arrived
  Eigen::VectorXd q;
  sim::Pose ee;
  std::vector<ObjectFrame> objects;
  bool task_done = false;
  double reward = 0.0;  // accumulated over the current episode

  bool operator==(const StateFrame& o) const {
    return tick == o.tick && server_timestamp == o.server_timestamp &&
           echoed_client_timestamp == o.echoed_client_timestamp &&
           command_received_timestamp == o.command_received_timestamp && q == o.q && ee == o.ee &&
           objects == o.objects && task_done == o.task_done && reward == o.reward;
  }

  /// Uplink delay estimate: (server − echoed client time) minus time spent on the server.
  double one_way_delay_estimate() const {
    return (server_timestamp - echoed_client_timestamp) - (server_timestamp - command_received_timestamp);
  }
};

struct HapticEvent {
  sim::EventKind kind = sim::EventKind::attach;
  std::int32_t object_id = -1;
  std::uint64_t tick = 0;
  bool operator==(const HapticEvent&) const = default;
};

struct Reset {
  bool operator==(const Reset&) const = default;
};

struct DemoDone {
  bool success = false;
  double completion_time = 0.0;
  std::uint64_t ticks = 0;
  std::string path;
  bool operator==(const DemoDone&) const = default;
};

struct Heartbeat {
  std::string session_id;  // empty from operator clients
  bool operator==(const Heartbeat&) const = default;
};

enum class ErrorCode : std::uint16_t {
  busy = 1,
  invalid_argument = 2,
  auth_failed = 3,
  protocol = 4,
  internal = 5,
};

struct ErrorMessage {
  ErrorCode code = ErrorCode::internal;
  std::string message;
  bool operator==(const ErrorMessage&) const = default;
};

using Message = std::variant<Hello, JoinRequest, SessionInfo, PoseCommand, StateFrame, HapticEvent, Reset,
                             DemoDone, Heartbeat, ErrorMessage>;

MessageType type_of(const Message& m);

struct WireError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// 4-byte big-endian length (type byte + payload) ∥ type ∥ payload.
/// Throws WireError when the payload exceeds kMaxPayload.
std::vector<std::uint8_t> encode(const Message& msg);

/// Decodes exactly one frame. Throws WireError on truncation, trailing bytes,
/// unknown type codes or malformed payloads.
Message decode(std::span<const std::uint8_t> bytes);

/// Total frame size announced by the header at the front of `bytes`, or 0 if
/// fewer than 4 bytes are available.
std::size_t frame_size(std::span<const std::uint8_t> bytes);

}  // namespace teleopforge::transport
