#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "teleopforge/sim/arm.hpp"
#include "teleopforge/sim/kinematics.hpp"
#include "teleopforge/sim/state.hpp"
#include "teleopforge/sim/task.hpp"

namespace teleopforge::sim {

struct SimParams {
  double kv = 5.0;             // 1/s, joint velocity gain
  double dt = 0.02;            // 50 Hz
  double grasp_radius = 0.03;  // m
  double table_height = 0.0;
};

enum class EventKind : std::uint8_t { attach = 1, detach = 2, table_penetration = 3, clamp = 4 };

std::string_view to_string(EventKind kind);
EventKind parse_event_kind(std::string_view name);

struct SimEvent {
  EventKind kind = EventKind::attach;
  int object_id = -1;
  std::uint64_t tick = 0;

  bool operator==(const SimEvent&) const = default;
};

struct StepResult {
  SimState state;
  std::vector<SimEvent> events;
};

/// Joint velocity command -kv (q - q*), clamped per joint to its velocity limit.
Eigen::VectorXd joint_velocity_command(const ArmConfig& config, const Eigen::VectorXd& q,
                                       const Eigen::VectorXd& q_target, double kv);

/// Deterministic kinematic simulator of one arm and one task. Grasping is
/// proximity-based: a closed gripper within the grasp radius of an object's
/// center attaches it rigidly to the tool frame; opening drops it straight
/// down onto the highest support beneath it.
class Simulator {
 public:
  Simulator(ArmConfig arm, TaskSpec task, SimParams params = {});

  const ArmConfig& arm() const { return arm_; }
  const TaskSpec& task() const { return task_; }
  const SimParams& params() const { return params_; }
  const Eigen::VectorXd& home_q() const { return home_q_; }

  /// Nominal start state: arm at home, objects at their initial poses.
  SimState reset() const;
  /// Start state with object xy perturbed uniformly by the task's reset jitter.
  SimState reset(std::mt19937_64& rng) const;

  StepResult step(const SimState& state, const Eigen::VectorXd& q_target, bool gripper_cmd,
                  double dt) const;
  StepResult step(const SimState& state, const Eigen::VectorXd& q_target, bool gripper_cmd) const {
    return step(state, q_target, gripper_cmd, params_.dt);
  }

  bool check_success(const SimState& state) const;

  Pose ee_pose(const SimState& state) const { return forward_kinematics(arm_, state.arm.q); }

  /// Height of the highest surface under object `index` at its current xy.
  double support_height(const SimState& state, std::size_t index) const;

  const ObjectSpec& object_spec(std::size_t index) const { return task_.objects.at(index); }

 private:
  void drop(SimState& state, std::size_t index) const;

  ArmConfig arm_;
  TaskSpec task_;
  SimParams params_;
  Eigen::VectorXd home_q_;
};

/// check_success as a free function over an explicit task.
bool check_success(const SimState& state, const TaskSpec& task);

}  // namespace teleopforge::sim
