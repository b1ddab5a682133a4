#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "teleopforge/learn/env.hpp"

namespace teleopforge::learn {

/// Fully connected network, tanh on hidden layers, linear output. Parameters
/// live in one flat vector: per layer the weight matrix (column-major) then
/// the bias.
class Mlp {
 public:
  Mlp() = default;
  /// Scaled-normal init; the last layer is multiplied by `output_gain`.
  Mlp(std::vector<int> sizes, std::mt19937_64& rng, double output_gain = 0.01);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  /// Layer inputs of a batched forward pass, kept for backward.
  struct Tape {
    std::vector<Eigen::MatrixXd> inputs;
  };

  /// Columns are samples.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Tape& tape) const;
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  /// Gradient of a loss with respect to the parameters, given dL/doutput.
  Eigen::VectorXd backward(const Tape& tape, const Eigen::MatrixXd& d_out) const;

 private:
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }

  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;
  Eigen::VectorXd params_;
};

class Adam {
 public:
  explicit Adam(double lr = 3e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

/// Rescales `grad` in place so its norm is at most `max_norm`; returns the original norm.
double clip_grad_norm(Eigen::VectorXd& grad, double max_norm);

/// Diagonal Gaussian over actions; the mean comes from an MLP over features(obs)
/// and the log-std is state-independent.
struct GaussianPolicy {
  Mlp net;
  Eigen::VectorXd log_std;

  static GaussianPolicy create(int hidden, double init_log_std, std::mt19937_64& rng);

  Action mean(const Obs& obs) const;
  Action sample(const Obs& obs, std::mt19937_64& rng, double* log_prob = nullptr) const;

  /// Flat parameter vector: network parameters then log_std.
  Eigen::VectorXd flat() const;
  void set_flat(const Eigen::VectorXd& flat);
};

/// Log density of each column of `actions` under N(means, exp(log_std)^2).
Eigen::VectorXd log_prob(const Eigen::MatrixXd& means, const Eigen::VectorXd& log_std,
                         const Eigen::MatrixXd& actions);

inline constexpr int kPolicyFormatVersion = 1;

std::string policy_to_json(const GaussianPolicy& policy, const std::string& task, const std::string& kind);
struct LoadedPolicy {
  GaussianPolicy policy;
  std::string task;
  std::string kind;
};
/// Throws std::runtime_error on a malformed document or unsupported version.
LoadedPolicy policy_from_json(const std::string& text);
void save_policy(const std::string& path, const GaussianPolicy& policy, const std::string& task,
                 const std::string& kind);
LoadedPolicy load_policy(const std::string& path);

}  // namespace teleopforge::learn
