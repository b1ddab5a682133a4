#include "teleopforge/sim/kinematics.hpp"

#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>

namespace teleopforge::sim {

namespace {

void check_dims(const ArmConfig& config, const Eigen::VectorXd& q) {
  if (static_cast<std::size_t>(q.size()) != config.dof()) {
    throw std::invalid_argument("joint vector has " + std::to_string(q.size()) +
                                " entries, arm has " + std::to_string(config.dof()));
  }
}

// Log map of a rotation: axis * angle, with angle in [0, pi].
Eigen::Vector3d rotation_error(const Eigen::Quaterniond& current, const Eigen::Quaterniond& target) {
  Eigen::Quaterniond delta = target * current.conjugate();
  if (delta.w() < 0.0) delta.coeffs() = -delta.coeffs();
  const Eigen::Vector3d v = delta.vec();
  const double s = v.norm();
  if (s < 1e-15) return 2.0 * v;
  const double angle = 2.0 * std::atan2(s, delta.w());
  return v * (angle / s);
}

}  // namespace

Pose forward_kinematics(const ArmConfig& config, const Eigen::VectorXd& q) {
  check_dims(config, q);
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  for (std::size_t i = 0; i < config.dof(); ++i) {
    const auto& j = config.joints[i];
    r = r * Eigen::AngleAxisd(q[static_cast<Eigen::Index>(i)], j.rotation_axis).toRotationMatrix();
    p += r * j.post_translation;
  }
  p += r * config.tool_offset;
  Pose pose;
  pose.position = p;
  pose.orientation = Eigen::Quaterniond(r).normalized();
  return pose;
}

Eigen::Matrix<double, 6, Eigen::Dynamic> jacobian(const ArmConfig& config, const Eigen::VectorXd& q) {
  check_dims(config, q);
  const auto n = static_cast<Eigen::Index>(config.dof());
  Eigen::Matrix<double, 3, Eigen::Dynamic> origins(3, n);
  Eigen::Matrix<double, 3, Eigen::Dynamic> axes(3, n);
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& j = config.joints[static_cast<std::size_t>(i)];
    origins.col(i) = p;
    axes.col(i) = r * j.rotation_axis;
    r = r * Eigen::AngleAxisd(q[i], j.rotation_axis).toRotationMatrix();
    p += r * j.post_translation;
  }
  p += r * config.tool_offset;

  Eigen::Matrix<double, 6, Eigen::Dynamic> jac(6, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d z = axes.col(i);
    jac.block<3, 1>(0, i) = z.cross(p - origins.col(i));
    jac.block<3, 1>(3, i) = z;
  }
  return jac;
}

IkResult solve_ik(const ArmConfig& config, const Eigen::VectorXd& q_seed, const Pose& target,
                  const IkOptions& options) {
  check_dims(config, q_seed);
  const int rows = options.position_only ? 3 : 6;
  const double lambda2 = options.damping * options.damping;

  IkResult best;
  Eigen::VectorXd q = clamp_to_limits(config, q_seed);
  double best_norm = std::numeric_limits<double>::infinity();

  for (int iter = 0;; ++iter) {
    const Pose pose = forward_kinematics(config, q);
    Eigen::Matrix<double, 6, 1> err;
    err.head<3>() = target.position - pose.position;
    err.tail<3>() = rotation_error(pose.orientation, target.orientation);
    const double pos_err = err.head<3>().norm();
    const double ori_err = err.tail<3>().norm();
    const double norm = options.position_only ? pos_err : err.norm();

    if (norm < best_norm) {
      best_norm = norm;
      best.q = q;
      best.iterations = iter;
      best.position_error = pos_err;
      best.orientation_error = ori_err;
    }
    if (norm < options.stop_tolerance || iter >= options.max_iterations) break;

    const Eigen::MatrixXd jac = jacobian(config, q).topRows(rows);
    Eigen::MatrixXd jjt = jac * jac.transpose();
    jjt.diagonal().array() += lambda2;
    Eigen::VectorXd dq = jac.transpose() * jjt.ldlt().solve(err.head(rows));

    const double largest = dq.cwiseAbs().maxCoeff();
    if (largest > options.max_step) dq *= options.max_step / largest;
    q = clamp_to_limits(config, q + dq);
  }

  best.converged = best.position_error < options.position_tolerance &&
                   (options.position_only || best.orientation_error < options.orientation_tolerance);
  return best;
}

}  // namespace teleopforge::sim
