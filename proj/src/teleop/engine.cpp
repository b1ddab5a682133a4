#include "teleopforge/teleop/engine.hpp"

#include <cmath>

#include "teleopforge/sim/kinematics.hpp"

namespace teleopforge::teleop {

SessionEngine::SessionEngine(SessionConfig config)
    : config_(std::move(config)), sim_(config_.arm, config_.task), rng_(config_.seed) {
  restart_scene();
}

bool SessionEngine::frame_due_at(std::uint64_t t) {
  const auto per = static_cast<std::uint64_t>(kFrameHz);
  const auto base = static_cast<std::uint64_t>(kControlHz);
  return t == 0 || (t * per) / base != ((t - 1) * per) / base;
}

void SessionEngine::restart_scene() {
  state_ = config_.jitter_resets ? sim_.reset(rng_) : sim_.reset();
  q_target_ = state_.arm.q;
  gripper_ = false;
  clutch_.release(sim_.ee_pose(state_));
  recorder_.reset();
  reward_ = 0.0;
}

void SessionEngine::reset() {
  if (recorder_) ++failures_;
  restart_scene();
}

void SessionEngine::abort() {
  if (recorder_) ++failures_;
  recorder_.reset();
}

SessionEngine::TickOutput SessionEngine::tick(const std::optional<transport::LatestCommandCell::Taken>& cmd,
                                              double now_ms) {
  TickOutput out;
  out.tick = tick_;
  out.frame_due = frame_due_at(tick_);
  ++tick_;

  if (cmd) {
    last_cmd_ = cmd->command;
    last_cmd_received_ms_ = cmd->received_at_ms;
    const auto mapped = clutch_.map(cmd->command, sim_.ee_pose(state_), config_.workspace);
    if (mapped.clamped) out.events.push_back({sim::EventKind::clamp, -1, state_.tick + 1});
    const auto ik = sim::solve_ik(sim_.arm(), state_.arm.q, mapped.target, config_.ik);
    q_target_ = ik.q;
    gripper_ = cmd->command.gripper;
    if (!recorder_) {
      demostore::EpisodeHeader h;
      h.task = std::string(sim::to_string(sim_.task().kind));
      h.user = config_.user;
      h.condition = config_.condition;
      h.arm_config_hash = sim_.arm().hash();
      h.dt = sim_.params().dt;
      h.started_at = now_ms;
      recorder_.emplace(h, state_);
      episode_started_ms_ = now_ms;
      reward_ = 0.0;
    }
  }
  if (!recorder_) return out;  // idle until the first command

  auto step = sim_.step(state_, q_target_, gripper_);
  const bool success = step.state.task_done;
  const double r = success ? 1.0 : 0.0;
  reward_ += r;
  recorder_->record_step(q_target_, gripper_, cmd ? std::optional(cmd->command) : std::nullopt, step, r);
  out.events.insert(out.events.end(), step.events.begin(), step.events.end());
  state_ = std::move(step.state);

  if (success) {
    auto record = recorder_->finish(true, now_ms);
    recorder_.reset();
    ++successes_;
    transport::DemoDone done;
    done.success = true;
    done.completion_time = record.header.completion_time;
    done.ticks = record.step_count();
    if (!config_.storage.empty()) {
      const auto path = demostore::write_demo(record, config_.storage, config_.compress);
      done.path = path.string();
      stored_.push_back(path);
      finished_.clear();
    }
    finished_.push_back(std::move(record));
    out.demo_done = done;
    // Frames until the next episode starts still report the finished episode's reward.
    const double total = reward_;
    restart_scene();
    reward_ = total;
  }
  return out;
}

transport::StateFrame SessionEngine::frame(double now_ms) const {
  transport::StateFrame f;
  f.tick = tick_;
  f.server_timestamp = now_ms;
  if (last_cmd_) {
    f.echoed_client_timestamp = last_cmd_->client_timestamp;
    f.command_received_timestamp = last_cmd_received_ms_;
  }
  f.q = state_.arm.q;
  f.ee = sim_.ee_pose(state_);
  for (const auto& o : state_.objects) f.objects.push_back({o.id, o.pose, o.attached});
  f.task_done = state_.task_done;
  f.reward = reward_;
  return f;
}

}  // namespace teleopforge::teleop
