#include "teleopforge/learn/env.hpp"

#include <algorithm>
#include <stdexcept>

namespace teleopforge::learn {

namespace {

// Same box the teleop clutch clamps to.
const Eigen::Vector3d kWorkspaceMin(-0.10, -0.55, 0.0);
const Eigen::Vector3d kWorkspaceMax(0.70, 0.55, 0.70);

}  // namespace

bool object_at_goal(const sim::TaskSpec& task, const sim::SimState& state, std::size_t index) {
  const auto& o = state.objects.at(index);
  const auto& spec = task.objects.at(index);
  switch (task.kind) {
    case sim::TaskKind::lifting:
      return o.pose.position.z() - spec.initial_position.z() >= task.lift_height;
    case sim::TaskKind::picking:
      return !o.attached && task.bins.at(static_cast<std::size_t>(spec.goal)).contains(o.pose.position);
    case sim::TaskKind::assembly: {
      const auto& peg = task.pegs.at(static_cast<std::size_t>(spec.goal));
      return (o.pose.position.head<2>() - peg.position).norm() <= task.radial_tolerance &&
             o.pose.position.z() < peg.height;
    }
  }
  return false;
}

std::size_t active_object(const sim::TaskSpec& task, const sim::SimState& state) {
  const int held = state.attached_index();
  if (held >= 0) return static_cast<std::size_t>(held);
  if (task.kind == sim::TaskKind::lifting) return 0;
  for (std::size_t i = 0; i < state.objects.size(); ++i) {
    if (!object_at_goal(task, state, i)) return i;
  }
  return state.objects.size() - 1;
}

Obs observe(const sim::Simulator& sim, const sim::SimState& state) {
  if (state.arm.q.size() != 7) throw std::invalid_argument("observation expects a 7-joint arm");
  Obs o;
  const Eigen::Vector3d ee = sim.ee_pose(state).position;
  const auto& obj = state.objects.at(active_object(sim.task(), state));
  o.head<7>() = state.arm.q;
  o.segment<3>(7) = ee;
  o.segment<3>(10) = obj.pose.position - ee;
  o[13] = state.arm.gripper_closed ? 1.0 : 0.0;
  o[14] = state.attached_index() >= 0 ? 1.0 : 0.0;
  return o;
}

Eigen::VectorXd features(const Obs& obs) {
  Eigen::VectorXd x(kObsDim);
  x.head<7>() = obs.head<7>();
  x.segment<3>(7) = (obs.segment<3>(7) - Eigen::Vector3d(0.35, 0.0, 0.15)) * 10.0;
  x.segment<3>(10) = obs.segment<3>(10) * 10.0;
  x[13] = 2.0 * obs[13] - 1.0;
  x[14] = 2.0 * obs[14] - 1.0;
  return x;
}

Env::Env(const sim::Simulator& sim, EnvOptions options) : sim_(&sim), options_(options) {
  if (options_.horizon <= 0 || options_.substeps <= 0 || options_.action_scale <= 0.0) {
    throw std::invalid_argument("env options must be positive");
  }
  state_ = sim.reset();
}

Obs Env::reset(const sim::SimState& state) {
  state_ = state;
  steps_ = 0;
  ever_succeeded_ = sim_->check_success(state_);
  return observation();
}

Eigen::Vector3d Env::target_for(const Action& action) const {
  const Eigen::Vector3d ee = sim_->ee_pose(state_).position;
  const Eigen::Vector3d delta = action.head<3>().cwiseMax(-1.0).cwiseMin(1.0) * options_.action_scale;
  return (ee + delta).cwiseMax(kWorkspaceMin).cwiseMin(kWorkspaceMax);
}

StepOutcome Env::step(const Action& action) { return advance(action, nullptr); }

StepOutcome Env::step(const Action& action, demostore::EpisodeRecorder& recorder) {
  return advance(action, &recorder);
}

StepOutcome Env::advance(const Action& action, demostore::EpisodeRecorder* recorder) {
  if (!action.allFinite()) throw std::invalid_argument("action has non-finite entries");
  const sim::Pose target{target_for(action), sim::downward_orientation()};
  const bool close = action[3] > 0.0;
  const Eigen::VectorXd q_star = sim::solve_ik(sim_->arm(), state_.arm.q, target, options_.ik).q;

  transport::PoseCommand cmd;
  cmd.seq = ++seq_;
  cmd.client_timestamp = static_cast<double>(state_.tick) * sim_->params().dt * 1000.0;
  cmd.position = target.position;
  cmd.orientation = target.orientation;
  cmd.gripper = close;
  cmd.engaged = true;

  for (int k = 0; k < options_.substeps; ++k) {
    auto r = sim_->step(state_, q_star, close);
    if (recorder) {
      recorder->record_step(q_star, close, k == 0 ? std::optional(cmd) : std::nullopt, r,
                            r.state.task_done ? 1.0 : 0.0);
    }
    state_ = std::move(r.state);
  }

  StepOutcome out;
  ++steps_;
  out.success = state_.task_done;
  ever_succeeded_ = ever_succeeded_ || out.success;
  out.reward = out.success ? 1.0 : 0.0;
  out.done = steps_ >= options_.horizon;
  out.obs = observation();
  return out;
}

ResetOutcome reset_env(const sim::Simulator& sim, const demostore::ResetSampler* demos, double demo_reset_prob,
                       std::mt19937_64& rng) {
  if (demo_reset_prob < 0.0 || demo_reset_prob > 1.0) throw std::invalid_argument("demo_reset_prob outside [0, 1]");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // The coin is always drawn so the random stream does not depend on the dataset.
  const bool use_demo = u(rng) < demo_reset_prob;
  if (use_demo && demos && demos->demo_count() > 0) return {demos->sample(rng), true};
  return {sim.reset(rng), false};
}

DemoPairs extract_pairs(const std::vector<demostore::EpisodeRecord>& demos, const sim::Simulator& sim,
                        const EnvOptions& options) {
  DemoPairs out;
  for (const auto& d : demos) {
    const bool from_env = d.header.condition == kEnvCondition;
    for (std::size_t i = 0; i < d.ticks.size(); ++i) {
      const auto& t = d.ticks[i];
      if (t.terminal()) break;
      Eigen::Vector3d target;
      bool close = t.gripper;
      if (from_env) {
        if (!t.command) continue;
        target = t.command->position;
        close = t.command->gripper;
      } else {
        if (i % static_cast<std::size_t>(options.substeps) != 0) continue;
        target = sim::forward_kinematics(sim.arm(), t.q_target).position;
      }
      const Eigen::Vector3d ee = sim.ee_pose(t.state).position;
      Action a;
      a.head<3>() = (target - ee) / options.action_scale;
      if (!from_env) a.head<3>() = a.head<3>().cwiseMax(-1.0).cwiseMin(1.0);
      a[3] = close ? 1.0 : -1.0;
      out.obs.push_back(observe(sim, t.state));
      out.actions.push_back(a);
    }
  }
  return out;
}

std::vector<demostore::EpisodeRecord> load_demos(const std::string& dir, const std::string& task) {
  return demostore::ResetSampler::from_index(demostore::build_index(dir), task).demos();
}

}  // namespace teleopforge::learn
