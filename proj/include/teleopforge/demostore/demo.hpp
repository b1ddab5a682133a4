#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "teleopforge/sim/simulator.hpp"
#include "teleopforge/sim/state.hpp"
#include "teleopforge/transport/messages.hpp"

namespace teleopforge::demostore {

inline constexpr int kFormatVersion = 1;

struct EpisodeHeader {
  int format_version = kFormatVersion;
  std::string task;
  std::string user;
  std::string condition;  // interface or network profile label, may be empty
  std::string arm_config_hash;
  double dt = 0.02;
  bool success = false;
  double completion_time = 0.0;  // s
  double started_at = 0.0;       // wall clock, ms since epoch
  double finished_at = 0.0;

  bool operator==(const EpisodeHeader&) const = default;
};

/// One control tick: the state before the step and everything applied to it.
/// The last record of an episode is terminal: the final state, no q_target.
struct TickRecord {
  std::uint64_t tick = 0;
  sim::SimState state;
  std::optional<transport::PoseCommand> command;
  Eigen::VectorXd q_target;  // empty on the terminal record
  bool gripper = false;
  double reward = 0.0;
  std::vector<sim::SimEvent> events;  // produced by this step

  bool terminal() const { return q_target.size() == 0; }
  bool operator==(const TickRecord& o) const {
    return tick == o.tick && state == o.state && command == o.command && q_target.size() == o.q_target.size() &&
           q_target == o.q_target && gripper == o.gripper && reward == o.reward && events == o.events;
  }
};

struct EpisodeRecord {
  EpisodeHeader header;
  std::vector<TickRecord> ticks;

  bool operator==(const EpisodeRecord&) const = default;

  std::uint64_t step_count() const;
  const sim::SimState& initial_state() const { return ticks.front().state; }
  const sim::SimState& final_state() const { return ticks.back().state; }
};

/// Builds an EpisodeRecord tick by tick.
class EpisodeRecorder {
 public:
  EpisodeRecorder(EpisodeHeader header, const sim::SimState& initial);

  void record_step(const Eigen::VectorXd& q_target, bool gripper, const std::optional<transport::PoseCommand>& cmd,
                   const sim::StepResult& result, double reward);
  /// Appends the terminal record and fills in success / completion_time.
  EpisodeRecord finish(bool success, double finished_at_ms = 0.0);

  std::uint64_t steps() const { return record_.ticks.size(); }

 private:
  EpisodeRecord record_;
  sim::SimState current_;
};

struct CorruptFileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyDatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Serialized file contents (plain newline-delimited JSON).
std::string serialize(const EpisodeRecord& record);
EpisodeRecord parse(std::string_view text, const std::string& origin = "<memory>");

/// Writes into `dir` (created if needed) under a unique name; gzip when
/// `compress`. The file appears atomically via rename.
std::filesystem::path write_demo(const EpisodeRecord& record, const std::filesystem::path& dir,
                                 bool compress = false);
/// Writes to an exact path; compression follows a ".gz" suffix.
void write_demo_file(const EpisodeRecord& record, const std::filesystem::path& path);
/// Reads plain or gzip files. Throws CorruptFileError naming the path.
EpisodeRecord read_demo(const std::filesystem::path& path);

bool is_demo_file(const std::filesystem::path& path);

struct IndexRow {
  std::string path;
  std::string task;
  std::string user;
  std::string condition;
  bool success = false;
  double completion_time = 0.0;
  std::uint64_t ticks = 0;

  bool operator==(const IndexRow&) const = default;
};

struct IndexAggregates {
  std::size_t count = 0;
  std::size_t successful = 0;
  double mean_completion_time = 0.0;  // over successful demos, 0 if none

  bool operator==(const IndexAggregates&) const = default;
};

IndexAggregates aggregate(const std::vector<IndexRow>& rows);

struct DatasetIndex {
  std::vector<IndexRow> rows;  // sorted by path
  IndexAggregates totals;
  std::vector<std::string> warnings;

  std::vector<IndexRow> successful(const std::string& task) const;
};

/// Recursively scans `dir` for demo files. Corrupt files are skipped and
/// reported through `warnings` and the optional callback.
DatasetIndex build_index(const std::filesystem::path& dir,
                         const std::function<void(const std::string&)>& warn = {});

/// Uniform over demos, then uniform over the recorded states of the chosen demo.
class ResetSampler {
 public:
  explicit ResetSampler(std::vector<EpisodeRecord> demos);
  /// Loads every successful demo of `task` listed in the index.
  static ResetSampler from_index(const DatasetIndex& index, const std::string& task);

  sim::SimState sample(std::mt19937_64& rng) const;
  std::size_t demo_count() const { return demos_.size(); }
  const std::vector<EpisodeRecord>& demos() const { return demos_; }

 private:
  std::vector<EpisodeRecord> demos_;
};

/// Throws EmptyDatasetError when no successful demo of `task` exists.
sim::SimState sample_reset_state(const DatasetIndex& index, const std::string& task, std::uint64_t seed);

struct ReplayReport {
  sim::SimState final_state;
  double max_deviation = 0.0;  // worst per-tick difference against the recorded states
  bool success = false;
  std::uint64_t steps = 0;
};

/// Re-simulates the recorded q_targets from the initial state. Throws
/// std::invalid_argument when the arm config hash does not match `sim`.
ReplayReport replay(const EpisodeRecord& record, const sim::Simulator& sim);

/// Largest absolute difference over joint positions, velocities and object positions.
double state_distance(const sim::SimState& a, const sim::SimState& b);

}  // namespace teleopforge::demostore
