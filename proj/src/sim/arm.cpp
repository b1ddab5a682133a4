#include "teleopforge/sim/arm.hpp"

#include <stdexcept>

#include "json.hpp"

#include "teleopforge/builtin_configs.hpp"
#include "teleopforge/util/canonical_json.hpp"

namespace teleopforge::sim {

namespace {

Eigen::Vector3d vec3(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

double ArmConfig::reach() const {
  double r = tool_offset.norm();
  for (const auto& j : joints) r += j.post_translation.norm();
  return r;
}

void ArmConfig::validate() const {
  if (joints.size() < 2) throw std::invalid_argument("arm needs at least 2 joints");
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const auto& j = joints[i];
    if (std::abs(j.rotation_axis.norm() - 1.0) > 1e-9) {
      throw std::invalid_argument("joint " + std::to_string(i) + ": axis is not unit length");
    }
    if (!(j.velocity_limit > 0.0)) {
      throw std::invalid_argument("joint " + std::to_string(i) + ": velocity limit must be positive");
    }
    if (!(j.lower_limit < j.upper_limit)) {
      throw std::invalid_argument("joint " + std::to_string(i) + ": empty position range");
    }
  }
}

ArmConfig ArmConfig::from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  ArmConfig config;
  config.name = j.value("name", "arm");
  for (const auto& jj : j.at("joints")) {
    JointSpec spec;
    spec.rotation_axis = vec3(jj.at("axis"));
    spec.post_translation = vec3(jj.at("translation"));
    spec.lower_limit = jj.at("limits").at(0).get<double>();
    spec.upper_limit = jj.at("limits").at(1).get<double>();
    spec.velocity_limit = jj.at("velocity_limit").get<double>();
    config.joints.push_back(spec);
  }
  config.tool_offset = vec3(j.at("tool_offset"));
  config.validate();
  return config;
}

std::string ArmConfig::to_canonical_json() const {
  CanonicalJsonWriter w;
  w.begin_object().field("name", name).key("joints").begin_array();
  for (const auto& j : joints) {
    const double lim[2] = {j.lower_limit, j.upper_limit};
    w.begin_object();
    w.key("axis").array(std::span<const double>(j.rotation_axis.data(), 3));
    w.key("translation").array(std::span<const double>(j.post_translation.data(), 3));
    w.key("limits").array(lim);
    w.field("velocity_limit", j.velocity_limit);
    w.end_object();
  }
  w.end_array();
  w.key("tool_offset").array(std::span<const double>(tool_offset.data(), 3));
  w.end_object();
  return w.take();
}

std::string ArmConfig::hash() const { return fnv1a64_hex(to_canonical_json()); }

const ArmConfig& default_arm() {
  static const ArmConfig arm = ArmConfig::from_json(builtin::kArm7Dof);
  return arm;
}

Eigen::VectorXd clamp_to_limits(const ArmConfig& config, const Eigen::VectorXd& q) {
  Eigen::VectorXd out = q;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const auto& j = config.joints[static_cast<std::size_t>(i)];
    out[i] = std::clamp(out[i], j.lower_limit, j.upper_limit);
  }
  return out;
}

}  // namespace teleopforge::sim
