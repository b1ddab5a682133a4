#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "teleopforge/demostore/demo.hpp"
#include "teleopforge/sim/simulator.hpp"
#include "teleopforge/teleop/clutch.hpp"
#include "teleopforge/transport/latest_wins.hpp"
#include "teleopforge/transport/messages.hpp"

namespace teleopforge::teleop {

inline constexpr double kControlHz = 50.0;
inline constexpr double kFrameHz = 30.0;

struct SessionConfig {
  sim::ArmConfig arm = sim::default_arm();
  sim::TaskSpec task = sim::builtin_task(sim::TaskKind::lifting);
  std::string user = "anonymous";
  std::string condition;
  std::filesystem::path storage;  // empty: keep records in memory only
  bool compress = false;
  bool jitter_resets = true;
  std::uint64_t seed = 0;
  Workspace workspace;
  sim::IkOptions ik;
};

/// The control loop body without any I/O or clock: one call per 50 Hz tick.
/// The episode starts at the first applied command and ends at task success
/// (stored, then the scene resets) or at reset()/abort().
class SessionEngine {
 public:
  explicit SessionEngine(SessionConfig config);

  struct TickOutput {
    std::uint64_t tick = 0;
    std::vector<sim::SimEvent> events;  // attach/detach/penetration from the step, plus clamp
    bool frame_due = false;
    std::optional<transport::DemoDone> demo_done;
  };

  TickOutput tick(const std::optional<transport::LatestCommandCell::Taken>& cmd, double now_ms = 0.0);

  /// Abandon the current episode as unsuccessful and restart the scene.
  void reset();
  /// Channel loss: the episode is dropped as unsuccessful, nothing is stored.
  void abort();

  transport::StateFrame frame(double now_ms) const;

  const sim::SimState& state() const { return state_; }
  const sim::Simulator& simulator() const { return sim_; }
  const ClutchMap& clutch() const { return clutch_; }
  bool episode_active() const { return recorder_.has_value(); }
  double episode_reward() const { return reward_; }
  std::uint64_t ticks() const { return tick_; }
  std::uint64_t successes() const { return successes_; }
  std::uint64_t failures() const { return failures_; }
  /// Finished successful episodes (all of them when storage is empty, else the latest).
  const std::vector<demostore::EpisodeRecord>& finished() const { return finished_; }
  const std::vector<std::filesystem::path>& stored_paths() const { return stored_; }

  /// True when a frame goes out at loop tick t (30 of every 50 ticks).
  static bool frame_due_at(std::uint64_t t);

 private:
  void restart_scene();

  SessionConfig config_;
  sim::Simulator sim_;
  std::mt19937_64 rng_;
  sim::SimState state_;
  ClutchMap clutch_;
  Eigen::VectorXd q_target_;
  bool gripper_ = false;
  std::optional<demostore::EpisodeRecorder> recorder_;
  std::optional<transport::PoseCommand> last_cmd_;
  double last_cmd_received_ms_ = 0.0;
  double episode_started_ms_ = 0.0;
  double reward_ = 0.0;
  std::uint64_t tick_ = 0;
  std::uint64_t successes_ = 0;
  std::uint64_t failures_ = 0;
  std::vector<demostore::EpisodeRecord> finished_;
  std::vector<std::filesystem::path> stored_;
};

}  // namespace teleopforge::teleop
