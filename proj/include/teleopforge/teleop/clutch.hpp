#pragma once

#include <Eigen/Core>

#include "teleopforge/sim/pose.hpp"
#include "teleopforge/transport/messages.hpp"

namespace teleopforge::teleop {

/// Axis-aligned box the end-effector target is kept inside; z_min is the table plane.
struct Workspace {
  Eigen::Vector3d min{-0.10, -0.55, 0.0};
  Eigen::Vector3d max{0.70, 0.55, 0.70};
};

/// Relative (clutched) mapping from controller pose to end-effector target.
/// Engaging captures offset = ee ∘ cmd⁻¹; while engaged target = offset ∘ cmd.
/// Disengaged, the target stays where it was.
class ClutchMap {
 public:
  explicit ClutchMap(const sim::Pose& initial_target = {}) : target_(initial_target) {}

  struct Result {
    sim::Pose target;
    bool engage_edge = false;
    bool clamped = false;
  };

  Result map(const transport::PoseCommand& cmd, const sim::Pose& current_ee, const Workspace& workspace);

  /// Forget the engagement (e.g. after a reset); the next engaged command is an edge again.
  void release(const sim::Pose& new_target);

  bool engaged() const { return engaged_; }
  const sim::Pose& target() const { return target_; }
  const sim::Pose& offset() const { return offset_; }

 private:
  bool engaged_ = false;
  sim::Pose offset_;
  sim::Pose target_;
};

}  // namespace teleopforge::teleop
