#include "teleopforge/teleop/clutch.hpp"

namespace teleopforge::teleop {

ClutchMap::Result ClutchMap::map(const transport::PoseCommand& cmd, const sim::Pose& current_ee,
                                 const Workspace& workspace) {
  Result r;
  if (!cmd.engaged) {
    engaged_ = false;
    r.target = target_;
    return r;
  }
  if (!engaged_) {
    engaged_ = true;
    r.engage_edge = true;
    offset_ = current_ee.compose(cmd.pose().inverse());
    // offset ∘ cmd equals the current pose up to rounding; use it exactly.
    target_ = current_ee;
  } else {
    target_ = offset_.compose(cmd.pose());
  }
  const Eigen::Vector3d clamped = target_.position.cwiseMax(workspace.min).cwiseMin(workspace.max);
  if (clamped != target_.position) {
    r.clamped = true;
    target_.position = clamped;
  }
  r.target = target_;
  return r;
}

void ClutchMap::release(const sim::Pose& new_target) {
  engaged_ = false;
  target_ = new_target;
}

}  // namespace teleopforge::teleop
