#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "teleopforge/demostore/demo.hpp"
#include "teleopforge/sim/simulator.hpp"

namespace teleopforge::learn {

inline constexpr int kObsDim = 15;
inline constexpr int kActDim = 4;

/// [q (7), ee position (3), active object relative to ee (3), gripper, attached]
using Obs = Eigen::Matrix<double, kObsDim, 1>;
/// [dx, dy, dz in units of the action scale, gripper (> 0 closes)]
using Action = Eigen::Matrix<double, kActDim, 1>;

/// Condition label on records produced through Env. Their commands carry the
/// commanded end-effector target, which makes actions recoverable exactly.
inline constexpr const char* kEnvCondition = "env-step";

struct EnvOptions {
  int horizon = 100;
  int substeps = 10;           // simulator ticks per env step
  double action_scale = 0.02;  // m per unit action
  sim::IkOptions ik{};
};

/// Object the observation points at: the attached one, else the first one not
/// yet at its goal (object 0 on lifting).
std::size_t active_object(const sim::TaskSpec& task, const sim::SimState& state);
/// Per-object goal predicate for picking and assembly; lifting uses the task predicate.
bool object_at_goal(const sim::TaskSpec& task, const sim::SimState& state, std::size_t index);

Obs observe(const sim::Simulator& sim, const sim::SimState& state);

/// Fixed per-dimension scaling applied before the networks.
Eigen::VectorXd features(const Obs& obs);

struct StepOutcome {
  Obs obs;
  double reward = 0.0;
  bool success = false;
  bool done = false;  // horizon reached
};

/// Sparse-reward episodic wrapper around one simulator. An action moves the
/// end-effector target, solved by IK once and tracked for `substeps` ticks.
class Env {
 public:
  explicit Env(const sim::Simulator& sim, EnvOptions options = {});

  const sim::Simulator& simulator() const { return *sim_; }
  const EnvOptions& options() const { return options_; }

  Obs reset(const sim::SimState& state);
  StepOutcome step(const Action& action);
  /// Same as step, appending every simulator tick to `recorder`.
  StepOutcome step(const Action& action, demostore::EpisodeRecorder& recorder);

  Eigen::Vector3d target_for(const Action& action) const;

  const sim::SimState& state() const { return state_; }
  Obs observation() const { return observe(*sim_, state_); }
  int steps() const { return steps_; }
  bool ever_succeeded() const { return ever_succeeded_; }

 private:
  StepOutcome advance(const Action& action, demostore::EpisodeRecorder* recorder);

  const sim::Simulator* sim_;
  EnvOptions options_;
  sim::SimState state_;
  int steps_ = 0;
  bool ever_succeeded_ = false;
  std::uint64_t seq_ = 0;
};

struct ResetOutcome {
  sim::SimState state;
  bool from_demo = false;
};

/// With probability `demo_reset_prob` a state drawn from the demonstrations,
/// otherwise a default randomized reset. No demos means always default.
ResetOutcome reset_env(const sim::Simulator& sim, const demostore::ResetSampler* demos, double demo_reset_prob,
                       std::mt19937_64& rng);

/// Observation/action pairs recovered from demonstrations, one per env step.
struct DemoPairs {
  std::vector<Obs> obs;
  std::vector<Action> actions;

  std::size_t size() const { return obs.size(); }
};

/// Env-produced records use their commanded targets; any other record is
/// sampled every `substeps` ticks with FK(q_target) as the target.
DemoPairs extract_pairs(const std::vector<demostore::EpisodeRecord>& demos, const sim::Simulator& sim,
                        const EnvOptions& options = {});

/// Successful demos of `task` under `dir`, sorted by path.
std::vector<demostore::EpisodeRecord> load_demos(const std::string& dir, const std::string& task);

}  // namespace teleopforge::learn
