#pragma once

#include <cstdint>
#include <vector>

#include "teleopforge/learn/env.hpp"
#include "teleopforge/learn/nn.hpp"

namespace teleopforge::learn {

struct BcConfig {
  int hidden = 64;
  int epochs = 50;
  int minibatch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct BcResult {
  GaussianPolicy policy;         // acts with its mean
  std::vector<double> epoch_loss;  // full-data MSE after each epoch
};

/// Mean squared action error regression. Throws std::invalid_argument on no data.
BcResult bc_train(const DemoPairs& data, const BcConfig& config = {});

/// Mean squared error of `policy`'s mean over `data`.
double bc_loss(const GaussianPolicy& policy, const DemoPairs& data);

/// Acts with the stored action of the Euclidean-nearest stored observation.
class NearestNeighborPolicy {
 public:
  /// Throws std::invalid_argument on no data.
  explicit NearestNeighborPolicy(DemoPairs data);

  Action act(const Obs& obs) const { return data_.actions[nearest(obs)]; }
  std::size_t nearest(const Obs& obs) const;
  std::size_t size() const { return data_.size(); }

  /// Batched queries; the OpenMP and serial versions return the same indices.
  std::vector<std::size_t> nearest_batch_serial(const std::vector<Obs>& queries) const;
  std::vector<std::size_t> nearest_batch_parallel(const std::vector<Obs>& queries) const;

 private:
  DemoPairs data_;
  Eigen::Matrix<double, kObsDim, Eigen::Dynamic> points_;
};

}  // namespace teleopforge::learn
