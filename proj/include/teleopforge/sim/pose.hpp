#pragma once

#include <Eigen/Geometry>

namespace teleopforge::sim {

/// Rigid pose: position in meters plus a unit quaternion.
struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  static Pose identity() { return {}; }

  Eigen::Isometry3d to_isometry() const {
    Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
    t.linear() = orientation.toRotationMatrix();
    t.translation() = position;
    return t;
  }

  static Pose from_isometry(const Eigen::Isometry3d& t) {
    Pose p;
    p.position = t.translation();
    p.orientation = Eigen::Quaterniond(t.linear()).normalized();
    return p;
  }

  // this ∘ other
  Pose compose(const Pose& other) const {
    Pose p;
    p.position = position + orientation * other.position;
    p.orientation = (orientation * other.orientation).normalized();
    return p;
  }

  Pose inverse() const {
    Pose p;
    p.orientation = orientation.conjugate();
    p.position = -(p.orientation * position);
    return p;
  }

  bool operator==(const Pose& o) const {
    return position == o.position && orientation.coeffs() == o.orientation.coeffs();
  }
};

/// Angle in radians of the rotation taking `from` onto `to`.
inline double orientation_distance(const Eigen::Quaterniond& from, const Eigen::Quaterniond& to) {
  return from.angularDistance(to);
}

/// Tool pointing straight down (rotation of pi about world y).
inline Eigen::Quaterniond downward_orientation() { return Eigen::Quaterniond(0.0, 0.0, 1.0, 0.0); }

}  // namespace teleopforge::sim
