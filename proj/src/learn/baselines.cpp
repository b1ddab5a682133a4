#include "teleopforge/learn/baselines.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace teleopforge::learn {

namespace {

void pack(const DemoPairs& data, const std::vector<std::size_t>& idx, std::size_t start, std::size_t len,
          Eigen::MatrixXd& x, Eigen::MatrixXd& y) {
  x.resize(kObsDim, static_cast<Eigen::Index>(len));
  y.resize(kActDim, static_cast<Eigen::Index>(len));
  for (std::size_t k = 0; k < len; ++k) {
    x.col(static_cast<Eigen::Index>(k)) = features(data.obs[idx[start + k]]);
    y.col(static_cast<Eigen::Index>(k)) = data.actions[idx[start + k]];
  }
}

}  // namespace

double bc_loss(const GaussianPolicy& policy, const DemoPairs& data) {
  if (data.size() == 0) throw std::invalid_argument("no demonstration pairs");
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  Eigen::MatrixXd x, y;
  pack(data, all, 0, all.size(), x, y);
  return (policy.net.forward(x) - y).squaredNorm() / static_cast<double>(y.size());
}

BcResult bc_train(const DemoPairs& data, const BcConfig& config) {
  if (data.size() == 0) throw std::invalid_argument("behavior cloning needs at least one demonstration pair");
  if (config.epochs < 0 || config.minibatch <= 0 || config.hidden <= 0 || !(config.lr > 0.0)) {
    throw std::invalid_argument("invalid behavior cloning config");
  }
  std::mt19937_64 rng(config.seed);
  BcResult out;
  out.policy = GaussianPolicy::create(config.hidden, -1.0, rng);
  Adam opt(config.lr);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const auto mb = static_cast<std::size_t>(config.minibatch);
  Eigen::MatrixXd x, y;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const std::size_t len = std::min(mb, order.size() - start);
      pack(data, order, start, len, x, y);
      Mlp::Tape tape;
      const Eigen::MatrixXd pred = out.policy.net.forward(x, tape);
      const Eigen::MatrixXd d = 2.0 * (pred - y) / static_cast<double>(y.size());
      opt.step(out.policy.net.params(), out.policy.net.backward(tape, d));
    }
    out.epoch_loss.push_back(bc_loss(out.policy, data));
  }
  return out;
}

NearestNeighborPolicy::NearestNeighborPolicy(DemoPairs data) : data_(std::move(data)) {
  if (data_.size() == 0) throw std::invalid_argument("nearest-neighbor policy needs at least one demonstration pair");
  points_.resize(kObsDim, static_cast<Eigen::Index>(data_.size()));
  for (std::size_t i = 0; i < data_.size(); ++i) points_.col(static_cast<Eigen::Index>(i)) = data_.obs[i];
}

std::size_t NearestNeighborPolicy::nearest(const Obs& obs) const {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < points_.cols(); ++i) {
    const double d = (points_.col(i) - obs).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::size_t>(i);
    }
  }
  return best;
}

std::vector<std::size_t> NearestNeighborPolicy::nearest_batch_serial(const std::vector<Obs>& queries) const {
  std::vector<std::size_t> out(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) out[q] = nearest(queries[q]);
  return out;
}

std::vector<std::size_t> NearestNeighborPolicy::nearest_batch_parallel(const std::vector<Obs>& queries) const {
  std::vector<std::size_t> out(queries.size());
  const auto n = static_cast<long>(queries.size());
#pragma omp parallel for schedule(static)
  for (long q = 0; q < n; ++q) out[static_cast<std::size_t>(q)] = nearest(queries[static_cast<std::size_t>(q)]);
  return out;
}

}  // namespace teleopforge::learn
