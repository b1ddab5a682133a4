#include "teleopforge/sim/state.hpp"

#include <stdexcept>

#include "json.hpp"

#include "teleopforge/util/canonical_json.hpp"

namespace teleopforge::sim {

int SimState::attached_index() const {
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (objects[i].attached) return static_cast<int>(i);
  }
  return -1;
}

std::string to_json(const SimState& state) {
  CanonicalJsonWriter w;
  w.begin_object();
  w.key("arm").begin_object();
  w.key("q").array(std::span<const double>(state.arm.q.data(), static_cast<std::size_t>(state.arm.q.size())));
  w.key("qdot").array(
      std::span<const double>(state.arm.qdot.data(), static_cast<std::size_t>(state.arm.qdot.size())));
  w.field("gripper_closed", state.arm.gripper_closed);
  w.end_object();
  w.key("objects").begin_array();
  for (const auto& o : state.objects) {
    const auto& q = o.pose.orientation;
    const double quat[4] = {q.w(), q.x(), q.y(), q.z()};
    w.begin_object();
    w.field("id", o.id);
    w.key("position").array(std::span<const double>(o.pose.position.data(), 3));
    w.key("orientation").array(quat);
    w.field("attached", o.attached);
    w.end_object();
  }
  w.end_array();
  w.field("tick", static_cast<std::uint64_t>(state.tick));
  w.field("task_done", state.task_done);
  w.end_object();
  return w.take();
}

namespace {

Eigen::VectorXd vecx(const nlohmann::json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

}  // namespace

SimState state_from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  SimState s;
  const auto& arm = j.at("arm");
  s.arm.q = vecx(arm.at("q"));
  s.arm.qdot = vecx(arm.at("qdot"));
  if (s.arm.q.size() != s.arm.qdot.size()) throw std::invalid_argument("state: q/qdot size mismatch");
  s.arm.gripper_closed = arm.at("gripper_closed").get<bool>();
  for (const auto& o : j.at("objects")) {
    ObjectState os;
    os.id = o.at("id").get<int>();
    const auto& p = o.at("position");
    os.pose.position = {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()};
    const auto& q = o.at("orientation");
    os.pose.orientation = Eigen::Quaterniond(q.at(0).get<double>(), q.at(1).get<double>(),
                                             q.at(2).get<double>(), q.at(3).get<double>());
    os.attached = o.at("attached").get<bool>();
    s.objects.push_back(os);
  }
  s.tick = j.at("tick").get<std::uint64_t>();
  s.task_done = j.at("task_done").get<bool>();
  return s;
}

}  // namespace teleopforge::sim
