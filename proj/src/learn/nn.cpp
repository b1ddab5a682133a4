#include "teleopforge/learn/nn.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace teleopforge::learn {

Mlp::Mlp(std::vector<int> sizes, std::mt19937_64& rng, double output_gain) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw std::invalid_argument("an MLP needs at least an input and an output layer");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw std::invalid_argument("layer sizes must be positive");
    offsets_.push_back(total);
    total += static_cast<std::size_t>(sizes_[l + 1]) * static_cast<std::size_t>(sizes_[l] + 1);
  }
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(total));
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int in = sizes_[l], out = sizes_[l + 1];
    double gain = std::sqrt(1.0 / in);
    if (l + 2 == sizes_.size()) gain *= output_gain;
    for (int k = 0; k < in * out; ++k) params_[static_cast<Eigen::Index>(offsets_[l]) + k] = gain * n(rng);
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd a = x;
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = sizes_[l], out = sizes_[l + 1];
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + offsets_[l], out, in);
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + offsets_[l] + static_cast<std::size_t>(out * in), out);
    Eigen::MatrixXd z = (w * a).colwise() + b;
    if (l + 1 < layers) z = z.array().tanh();
    a = std::move(z);
  }
  return a;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Tape& tape) const {
  tape.inputs.clear();
  Eigen::MatrixXd a = x;
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = sizes_[l], out = sizes_[l + 1];
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + offsets_[l], out, in);
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + offsets_[l] + static_cast<std::size_t>(out * in), out);
    tape.inputs.push_back(a);
    Eigen::MatrixXd z = (w * a).colwise() + b;
    if (l + 1 < layers) z = z.array().tanh();
    a = std::move(z);
  }
  tape.inputs.push_back(a);  // network output, needed for the tanh derivative
  return a;
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  return forward(Eigen::MatrixXd(x)).col(0);
}

Eigen::VectorXd Mlp::backward(const Tape& tape, const Eigen::MatrixXd& d_out) const {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
  const std::size_t layers = sizes_.size() - 1;
  Eigen::MatrixXd delta = d_out;  // dL/dz of the current layer
  for (std::size_t l = layers; l-- > 0;) {
    const int in = sizes_[l], out = sizes_[l + 1];
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + offsets_[l], out, in);
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + offsets_[l], out, in);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + offsets_[l] + static_cast<std::size_t>(out * in), out);
    const Eigen::MatrixXd& a = tape.inputs[l];
    gw.noalias() = delta * a.transpose();
    gb = delta.rowwise().sum();
    if (l > 0) {
      // a = tanh(z_prev)
      delta = (w.transpose() * delta).array() * (1.0 - a.array().square());
    }
  }
  return grad;
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (m_.size() != params.size()) {
    m_ = Eigen::VectorXd::Zero(params.size());
    v_ = Eigen::VectorXd::Zero(params.size());
    t_ = 0;
  }
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

double clip_grad_norm(Eigen::VectorXd& grad, double max_norm) {
  const double n = grad.norm();
  if (max_norm > 0.0 && n > max_norm) grad *= max_norm / n;
  return n;
}

GaussianPolicy GaussianPolicy::create(int hidden, double init_log_std, std::mt19937_64& rng) {
  GaussianPolicy p;
  p.net = Mlp({kObsDim, hidden, hidden, kActDim}, rng);
  p.log_std = Eigen::VectorXd::Constant(kActDim, init_log_std);
  return p;
}

Action GaussianPolicy::mean(const Obs& obs) const { return net.forward(features(obs)); }

Action GaussianPolicy::sample(const Obs& obs, std::mt19937_64& rng, double* lp) const {
  std::normal_distribution<double> n(0.0, 1.0);
  const Action mu = mean(obs);
  Action a;
  for (int j = 0; j < kActDim; ++j) a[j] = mu[j] + std::exp(log_std[j]) * n(rng);
  if (lp) *lp = log_prob(Eigen::MatrixXd(mu), log_std, Eigen::MatrixXd(a))[0];
  return a;
}

Eigen::VectorXd GaussianPolicy::flat() const {
  Eigen::VectorXd f(net.params().size() + log_std.size());
  f << net.params(), log_std;
  return f;
}

void GaussianPolicy::set_flat(const Eigen::VectorXd& f) {
  const auto n = net.params().size();
  if (f.size() != n + log_std.size()) throw std::invalid_argument("flat parameter size mismatch");
  net.params() = f.head(n);
  log_std = f.tail(log_std.size());
}

Eigen::VectorXd log_prob(const Eigen::MatrixXd& means, const Eigen::VectorXd& log_std,
                         const Eigen::MatrixXd& actions) {
  const Eigen::ArrayXd inv_std = (-log_std.array()).exp();
  const double norm = log_std.sum() + 0.5 * static_cast<double>(log_std.size()) * std::log(2.0 * std::numbers::pi);
  const Eigen::ArrayXXd z = (actions - means).array().colwise() * inv_std;
  return (-0.5 * z.square().colwise().sum() - norm).matrix().transpose();
}

std::string policy_to_json(const GaussianPolicy& policy, const std::string& task, const std::string& kind) {
  nlohmann::ordered_json j;
  j["format"] = "teleopforge-policy";
  j["version"] = kPolicyFormatVersion;
  j["kind"] = kind;
  j["task"] = task;
  j["obs_dim"] = kObsDim;
  j["act_dim"] = kActDim;
  j["sizes"] = policy.net.sizes();
  j["log_std"] = std::vector<double>(policy.log_std.data(), policy.log_std.data() + policy.log_std.size());
  const auto& p = policy.net.params();
  j["params"] = std::vector<double>(p.data(), p.data() + p.size());
  return j.dump();
}

LoadedPolicy policy_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format") != "teleopforge-policy") throw std::runtime_error("not a policy file");
    if (j.at("version").get<int>() != kPolicyFormatVersion) {
      throw std::runtime_error("unsupported policy version " + j.at("version").dump());
    }
    if (j.at("obs_dim").get<int>() != kObsDim || j.at("act_dim").get<int>() != kActDim) {
      throw std::runtime_error("policy dimensions do not match the environment");
    }
    LoadedPolicy out;
    out.task = j.at("task").get<std::string>();
    out.kind = j.at("kind").get<std::string>();
    std::mt19937_64 rng(0);
    const auto sizes = j.at("sizes").get<std::vector<int>>();
    if (sizes.front() != kObsDim || sizes.back() != kActDim) throw std::runtime_error("layer sizes do not match");
    out.policy.net = Mlp(sizes, rng);
    const auto params = j.at("params").get<std::vector<double>>();
    if (params.size() != static_cast<std::size_t>(out.policy.net.params().size())) {
      throw std::runtime_error("parameter count does not match layer sizes");
    }
    out.policy.net.params() = Eigen::Map<const Eigen::VectorXd>(params.data(), static_cast<Eigen::Index>(params.size()));
    const auto ls = j.at("log_std").get<std::vector<double>>();
    if (ls.size() != kActDim) throw std::runtime_error("log_std has the wrong size");
    out.policy.log_std = Eigen::Map<const Eigen::VectorXd>(ls.data(), kActDim);
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed policy file: ") + e.what());
  }
}

void save_policy(const std::string& path, const GaussianPolicy& policy, const std::string& task,
                 const std::string& kind) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << policy_to_json(policy, task, kind) << '\n';
}

LoadedPolicy load_policy(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return policy_from_json(ss.str());
}

}  // namespace teleopforge::learn
