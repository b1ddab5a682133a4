#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "teleopforge/demostore/demo.hpp"

namespace teleopforge::analytics {

struct KSResult {
  double D = 0.0;
  double p = 1.0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
};

/// sup |F1 - F2| over right-continuous empirical CDFs. Throws
/// std::invalid_argument on an empty sample.
double ks_statistic(std::span<const double> x, std::span<const double> y);

/// Kolmogorov distribution tail 2 Σ (-1)^{k-1} exp(-2 k² λ²), clamped to [0, 1].
double q_ks(double lambda);

/// Asymptotic p-value with the (√n_e + 0.12 + 0.11/√n_e) small-sample correction.
double ks_p_value(double D, std::size_t n1, std::size_t n2);

KSResult ks_two_sample(std::span<const double> x, std::span<const double> y);

struct Summary {
  std::string group;
  double mean = 0.0;
  double std = 0.0;  // n-1 denominator, 0 when n == 1
  std::size_t count = 0;
};

Summary summarize_values(std::string group, std::span<const double> values);

enum class GroupKey { task, user, condition };
GroupKey parse_group_key(const std::string& name);

/// Successful demos only, grouped and sorted by key.
std::vector<Summary> summarize(const std::vector<demostore::IndexRow>& rows, GroupKey key);

void write_summary_table(std::ostream& out, const std::vector<Summary>& rows, GroupKey key);
void write_summary_csv(std::ostream& out, const std::vector<Summary>& rows, GroupKey key);

struct ObjectStage {
  int object_id = -1;
  double attach_time = 0.0;                  // s from episode start
  double time_to_grasp = 0.0;                // since the previous placement, or episode start
  std::optional<double> time_grasp_to_place; // absent if never released after the last grasp
};

struct StageTimings {
  std::optional<double> time_to_first_grasp;
  std::vector<ObjectStage> objects;  // objects never grasped are absent; ordered by first grasp
};

StageTimings stage_timings(const demostore::EpisodeRecord& demo);

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

/// Equal-width bins spanning [min, max]; the top edge is inclusive.
std::vector<HistogramBin> histogram(std::span<const double> values, std::size_t bins);
void write_histogram_csv(std::ostream& out, const std::vector<HistogramBin>& bins);

/// Numbers separated by whitespace or commas; '#' starts a comment.
std::vector<double> read_samples(const std::string& path);

}  // namespace teleopforge::analytics
