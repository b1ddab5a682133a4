#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace teleopforge::sim {

struct JointSpec {
  Eigen::Vector3d rotation_axis = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d post_translation = Eigen::Vector3d::Zero();
  double lower_limit = -3.14159;
  double upper_limit = 3.14159;
  double velocity_limit = 2.0;  // rad/s
};

/// Serial chain of revolute joints. Each joint rotates about its axis and then
/// translates to the next joint; the tool offset follows the last joint.
struct ArmConfig {
  std::string name;
  std::vector<JointSpec> joints;
  Eigen::Vector3d tool_offset = Eigen::Vector3d::Zero();

  std::size_t dof() const { return joints.size(); }
  /// Sum of segment lengths plus tool offset; radius of the workspace sphere.
  double reach() const;

  /// Throws std::invalid_argument when an invariant does not hold.
  void validate() const;

  static ArmConfig from_json(std::string_view text);
  std::string to_canonical_json() const;
  /// Digest of the canonical JSON; recorded with demonstrations.
  std::string hash() const;
};

/// The 7-joint arm shipped in config/arm_7dof.json.
const ArmConfig& default_arm();

struct ArmState {
  Eigen::VectorXd q;
  Eigen::VectorXd qdot;
  bool gripper_closed = false;

  bool operator==(const ArmState&) const = default;
};

Eigen::VectorXd clamp_to_limits(const ArmConfig& config, const Eigen::VectorXd& q);

}  // namespace teleopforge::sim
