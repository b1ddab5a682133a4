#include "teleopforge/sim/simulator.hpp"

#include <stdexcept>

namespace teleopforge::sim {

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::attach: return "attach";
    case EventKind::detach: return "detach";
    case EventKind::table_penetration: return "table_penetration";
    case EventKind::clamp: return "clamp";
  }
  return "unknown";
}

EventKind parse_event_kind(std::string_view name) {
  if (name == "attach") return EventKind::attach;
  if (name == "detach") return EventKind::detach;
  if (name == "table_penetration") return EventKind::table_penetration;
  if (name == "clamp") return EventKind::clamp;
  throw std::invalid_argument("unknown event kind '" + std::string(name) + "'");
}

Eigen::VectorXd joint_velocity_command(const ArmConfig& config, const Eigen::VectorXd& q,
                                       const Eigen::VectorXd& q_target, double kv) {
  Eigen::VectorXd qdot = -kv * (q - q_target);
  for (Eigen::Index i = 0; i < qdot.size(); ++i) {
    const double limit = config.joints[static_cast<std::size_t>(i)].velocity_limit;
    qdot[i] = std::clamp(qdot[i], -limit, limit);
  }
  return qdot;
}

namespace {

Eigen::VectorXd home_configuration(const ArmConfig& arm, const TaskSpec& task) {
  // Elbow-up seed with the tool pointing down; IK then places it at the home position.
  Eigen::VectorXd seed = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arm.dof()));
  constexpr double kBends[3] = {0.3, 0.9, 1.9};
  int bend = 0;
  for (std::size_t i = 0; i < arm.dof(); ++i) {
    if (arm.joints[i].rotation_axis.isApprox(Eigen::Vector3d::UnitY())) {
      seed[static_cast<Eigen::Index>(i)] = kBends[std::min(bend, 2)];
      ++bend;
    }
  }
  Pose target;
  target.position = task.home_position;
  target.orientation = downward_orientation();
  IkOptions opts;
  opts.max_iterations = 500;
  const IkResult ik = solve_ik(arm, seed, target, opts);
  if (!ik.converged) {
    throw std::invalid_argument("task home position is not reachable by arm '" + arm.name + "'");
  }
  return ik.q;
}

bool penetrating(const Simulator& sim, const SimState& state, double ee_z) {
  if (ee_z < sim.params().table_height) return true;
  const int a = state.attached_index();
  if (a >= 0) {
    const auto& o = state.objects[static_cast<std::size_t>(a)];
    if (o.pose.position.z() - sim.object_spec(static_cast<std::size_t>(a)).half_height <
        sim.params().table_height - 1e-12) {
      return true;
    }
  }
  return false;
}

}  // namespace

Simulator::Simulator(ArmConfig arm, TaskSpec task, SimParams params)
    : arm_(std::move(arm)), task_(std::move(task)), params_(params) {
  arm_.validate();
  task_.validate();
  home_q_ = home_configuration(arm_, task_);
}

SimState Simulator::reset() const {
  SimState s;
  s.arm.q = home_q_;
  s.arm.qdot = Eigen::VectorXd::Zero(home_q_.size());
  s.arm.gripper_closed = false;
  for (const auto& spec : task_.objects) {
    ObjectState o;
    o.id = spec.id;
    o.pose.position = spec.initial_position;
    s.objects.push_back(o);
  }
  return s;
}

SimState Simulator::reset(std::mt19937_64& rng) const {
  SimState s = reset();
  if (task_.reset_jitter > 0.0) {
    std::uniform_real_distribution<double> u(-task_.reset_jitter, task_.reset_jitter);
    for (auto& o : s.objects) {
      o.pose.position.x() += u(rng);
      o.pose.position.y() += u(rng);
    }
  }
  return s;
}

double Simulator::support_height(const SimState& state, std::size_t index) const {
  const auto& self = state.objects[index];
  const auto& spec = task_.objects[index];
  const Eigen::Vector2d xy = self.pose.position.head<2>();
  const double bottom = self.pose.position.z() - spec.half_height;
  double h = params_.table_height;

  for (std::size_t j = 0; j < state.objects.size(); ++j) {
    if (j == index || state.objects[j].attached) continue;
    const auto& other = state.objects[j];
    const auto& ospec = task_.objects[j];
    const double top = other.pose.position.z() + ospec.half_height;
    const double dist = (other.pose.position.head<2>() - xy).norm();
    if (dist < spec.radius + ospec.radius && top <= bottom + 1e-9) h = std::max(h, top);
  }
  for (const auto& peg : task_.pegs) {
    const double dist = (peg.position - xy).norm();
    if (dist >= peg.radius + spec.radius) continue;
    // A nut centered on the peg threads down it; anything else rests on top.
    const bool threads = task_.kind == TaskKind::assembly && dist <= task_.radial_tolerance;
    if (!threads && peg.height <= bottom + 1e-9) h = std::max(h, peg.height);
  }
  return h;
}

void Simulator::drop(SimState& state, std::size_t index) const {
  auto& o = state.objects[index];
  o.attached = false;
  o.pose.position.z() = support_height(state, index) + task_.objects[index].half_height;
}

StepResult Simulator::step(const SimState& state, const Eigen::VectorXd& q_target, bool gripper_cmd,
                           double dt) const {
  if (static_cast<std::size_t>(q_target.size()) != arm_.dof()) {
    throw std::invalid_argument("q_target dimension does not match the arm");
  }
  StepResult out{state, {}};
  SimState& s = out.state;
  const std::uint64_t tick = state.tick + 1;
  const double prev_ee_z = forward_kinematics(arm_, state.arm.q).position.z();

  const Eigen::VectorXd target = clamp_to_limits(arm_, q_target);
  const Eigen::VectorXd qdot = joint_velocity_command(arm_, state.arm.q, target, params_.kv);
  const Eigen::VectorXd q_next = clamp_to_limits(arm_, state.arm.q + qdot * dt);
  s.arm.qdot = qdot;
  for (Eigen::Index i = 0; i < q_next.size(); ++i) {
    if (q_next[i] != state.arm.q[i] + qdot[i] * dt) s.arm.qdot[i] = 0.0;  // pinned at a limit
  }
  s.arm.q = q_next;
  s.arm.gripper_closed = gripper_cmd;

  const Pose ee = forward_kinematics(arm_, s.arm.q);
  int attached = s.attached_index();

  if (!gripper_cmd && attached >= 0) {
    const auto idx = static_cast<std::size_t>(attached);
    drop(s, idx);
    out.events.push_back({EventKind::detach, s.objects[idx].id, tick});
    attached = -1;
  }
  if (gripper_cmd && attached < 0) {
    double best = params_.grasp_radius;
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      const double d = (s.objects[i].pose.position - ee.position).norm();
      if (d <= best) {
        best = d;
        attached = static_cast<int>(i);
      }
    }
    if (attached >= 0) {
      s.objects[static_cast<std::size_t>(attached)].attached = true;
      out.events.push_back({EventKind::attach, s.objects[static_cast<std::size_t>(attached)].id, tick});
    }
  }
  if (attached >= 0) s.objects[static_cast<std::size_t>(attached)].pose = ee;

  const bool was_penetrating = prev_ee_z < params_.table_height;
  if (penetrating(*this, s, ee.position.z()) && !was_penetrating) {
    out.events.push_back({EventKind::table_penetration, -1, tick});
  }

  s.tick = tick;
  s.task_done = check_success(s);
  return out;
}

bool Simulator::check_success(const SimState& state) const { return sim::check_success(state, task_); }

bool check_success(const SimState& state, const TaskSpec& task) {
  if (state.objects.size() != task.objects.size()) return false;
  switch (task.kind) {
    case TaskKind::lifting: {
      const auto& o = state.objects.front();
      return o.pose.position.z() - task.objects.front().initial_position.z() >= task.lift_height;
    }
    case TaskKind::picking:
      for (std::size_t i = 0; i < state.objects.size(); ++i) {
        const auto& o = state.objects[i];
        const auto& bin = task.bins[static_cast<std::size_t>(task.objects[i].goal)];
        if (o.attached || !bin.contains(o.pose.position)) return false;
      }
      return true;
    case TaskKind::assembly:
      for (std::size_t i = 0; i < state.objects.size(); ++i) {
        const auto& o = state.objects[i];
        const auto& peg = task.pegs[static_cast<std::size_t>(task.objects[i].goal)];
        const double dist = (o.pose.position.head<2>() - peg.position).norm();
        if (dist > task.radial_tolerance || o.pose.position.z() >= peg.height) return false;
      }
      return true;
  }
  return false;
}

}  // namespace teleopforge::sim
