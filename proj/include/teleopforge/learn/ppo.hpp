#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "teleopforge/demostore/demo.hpp"
#include "teleopforge/learn/env.hpp"
#include "teleopforge/learn/nn.hpp"

namespace teleopforge::learn {

struct PpoConfig {
  double demo_reset_prob = 0.9;
  double gamma = 0.99;
  double lambda = 0.95;
  double clip = 0.2;
  int actors = 8;
  int steps_per_actor = 256;  // per iteration
  int epochs = 4;
  int minibatch = 512;
  double policy_lr = 1e-3;
  double value_lr = 1e-3;
  double max_grad_norm = 0.5;
  double entropy_coef = 0.0;
  int hidden = 64;
  double init_log_std = -0.5;
  std::uint64_t seed = 0;
  int eval_episodes = 100;
  bool parallel = true;  // OpenMP across actors
  EnvOptions env{};

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Advantages by generalized advantage estimation. `next_values[t]` is V of the
/// state after step t; accumulation stops after any t with `segment_end[t]`.
std::vector<double> gae(const std::vector<double>& rewards, const std::vector<double>& values,
                        const std::vector<double>& next_values, const std::vector<std::uint8_t>& segment_end,
                        double gamma, double lambda);

struct PolicyBatch {
  Eigen::MatrixXd features;  // kObsDim x B
  Eigen::MatrixXd actions;   // kActDim x B
  Eigen::VectorXd old_log_prob;
  Eigen::VectorXd advantages;
};

struct PolicyLoss {
  double loss = 0.0;
  Eigen::VectorXd grad;  // with respect to GaussianPolicy::flat()
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

/// Clipped surrogate -mean(min(r A, clip(r) A)) minus the entropy bonus.
PolicyLoss ppo_policy_loss(const GaussianPolicy& policy, const PolicyBatch& batch, double clip,
                           double entropy_coef = 0.0, bool with_grad = true);

/// 0.5 mean (V - target)^2 and its gradient.
std::pair<double, Eigen::VectorXd> value_loss(const Mlp& value, const Eigen::MatrixXd& features,
                                              const Eigen::VectorXd& targets);

/// Transitions of one iteration, actor-major.
struct Rollout {
  Eigen::MatrixXd features;
  Eigen::MatrixXd actions;
  std::vector<double> log_prob, rewards, values, next_values;
  std::vector<std::uint8_t> segment_end;
  std::vector<double> episode_returns;  // episodes completed during the rollout
  std::vector<std::uint8_t> episode_success;
  std::size_t resets = 0;
  std::size_t demo_resets = 0;

  std::size_t size() const { return rewards.size(); }
};

struct IterationStats {
  int iteration = 0;
  std::uint64_t env_steps = 0;
  double mean_return = 0.0;      // over episodes finished this iteration, NaN if none
  double success_fraction = 0.0;
  double demo_reset_fraction = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double approx_kl = 0.0;
  double log_std_mean = 0.0;
};

struct EvalResult {
  double success_rate = 0.0;
  double mean_return = 0.0;
  int episodes = 0;
};

using PolicyFn = std::function<Action(const Obs&)>;

/// Episodes from default randomized resets; episode e uses a generator seeded
/// from (seed, e), so the result depends only on the policy and the seed.
EvalResult evaluate(const PolicyFn& policy, const sim::Simulator& sim, int episodes, std::uint64_t seed,
                    const EnvOptions& env = {});

struct TrainResult {
  GaussianPolicy policy;
  Mlp value;
  std::vector<IterationStats> curve;
  EvalResult eval;
  std::uint64_t env_steps = 0;
};

class PpoTrainer {
 public:
  /// `demos` may be empty; then every episode starts from a default reset.
  PpoTrainer(const sim::Simulator& sim, PpoConfig config, std::vector<demostore::EpisodeRecord> demos = {});
  ~PpoTrainer();

  /// Runs every actor for steps_per_actor steps under the current policy.
  Rollout collect(bool parallel);
  IterationStats update(const Rollout& rollout);

  /// Iterates until `budget` environment steps are spent, then evaluates greedily.
  TrainResult train(std::uint64_t budget, const std::function<void(const IterationStats&)>& progress = {});

  const GaussianPolicy& policy() const { return policy_; }
  const Mlp& value() const { return value_; }
  const PpoConfig& config() const { return config_; }

 private:
  struct Actor;

  const sim::Simulator& sim_;
  PpoConfig config_;
  std::unique_ptr<demostore::ResetSampler> sampler_;
  std::vector<std::unique_ptr<Actor>> actors_;
  GaussianPolicy policy_;
  Mlp value_;
  Adam policy_opt_, value_opt_;
  std::mt19937_64 rng_;
  int iteration_ = 0;
  std::uint64_t env_steps_ = 0;
};

/// Replays every demo and throws std::runtime_error if any deviates or fails,
/// so reset states are known to be reachable by the simulator.
void preflight_demos(const std::vector<demostore::EpisodeRecord>& demos, const sim::Simulator& sim);

}  // namespace teleopforge::learn
