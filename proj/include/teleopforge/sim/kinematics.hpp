#pragma once

#include <Eigen/Core>

#include "teleopforge/sim/arm.hpp"
#include "teleopforge/sim/pose.hpp"

namespace teleopforge::sim {

/// End-effector pose of the chain at joint positions `q`.
/// Throws std::invalid_argument if q does not have one entry per joint.
Pose forward_kinematics(const ArmConfig& config, const Eigen::VectorXd& q);

/// Geometric Jacobian (rows: linear xyz, angular xyz) at `q`.
Eigen::Matrix<double, 6, Eigen::Dynamic> jacobian(const ArmConfig& config, const Eigen::VectorXd& q);

struct IkOptions {
  double damping = 0.05;
  int max_iterations = 50;
  double max_step = 0.2;  // rad per iteration, per joint
  double position_tolerance = 1e-3;
  double orientation_tolerance = 1e-2;
  /// Iteration stops early once the residual twist norm drops below this.
  double stop_tolerance = 1e-10;
  bool position_only = false;
};

struct IkResult {
  Eigen::VectorXd q;
  bool converged = false;
  int iterations = 0;
  double position_error = 0.0;
  double orientation_error = 0.0;
};

/// Damped least squares on the 6-D pose error twist, starting from `q_seed`.
/// Unreachable targets are not an error: the best iterate is returned with
/// `converged == false` and its residual.
IkResult solve_ik(const ArmConfig& config, const Eigen::VectorXd& q_seed, const Pose& target,
                  const IkOptions& options = {});

}  // namespace teleopforge::sim
