#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "teleopforge/demostore/demo.hpp"
#include "teleopforge/learn/baselines.hpp"
#include "teleopforge/learn/ppo.hpp"

namespace teleopforge::learn {

struct AblationConfig {
  std::vector<int> counts{0, 1, 10, 100};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::uint64_t budget = 512000;  // env steps per run
  PpoConfig ppo{};
  bool baselines = true;  // BC and NP on the largest count
};

struct AblationCell {
  int count = 0;
  std::uint64_t seed = 0;
  double success_rate = 0.0;
  double mean_return = 0.0;
  double seconds = 0.0;
};

struct AblationResult {
  std::vector<AblationCell> cells;  // count-major, in config order
  std::vector<int> counts;
  std::vector<std::uint64_t> seeds;
  std::vector<double> mean_success;  // per count
  std::vector<double> std_success;
  double spearman = 0.0;             // count vs mean success
  int inversions = 0;                // adjacent decreases in mean success
  std::optional<EvalResult> bc;
  std::optional<EvalResult> np;

  const AblationCell& cell(int count, std::uint64_t seed) const;
};

/// Spearman rank correlation with average ranks for ties; 0 when either side is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// Trains one PPO run per (count, seed) on the first `count` demos. Throws
/// std::invalid_argument when fewer demos than the largest count are given.
AblationResult ablate_demo_count(const sim::Simulator& sim, const std::vector<demostore::EpisodeRecord>& demos,
                                 const AblationConfig& config,
                                 const std::function<void(const AblationCell&)>& progress = {});

/// Rows are demo counts, columns seeds, then mean +- std.
void write_ablation_table(std::ostream& out, const AblationResult& result);
void write_ablation_csv(std::ostream& out, const AblationResult& result);

}  // namespace teleopforge::learn
