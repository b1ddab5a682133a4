#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace teleopforge::sim {

enum class TaskKind { lifting, picking, assembly };

std::string_view to_string(TaskKind kind);
/// Throws std::invalid_argument for names other than lifting/picking/assembly.
TaskKind parse_task_kind(std::string_view name);
std::optional<TaskKind> try_parse_task_kind(std::string_view name);

struct ObjectSpec {
  int id = 0;
  std::string name;
  Eigen::Vector3d initial_position = Eigen::Vector3d::Zero();
  double half_height = 0.02;
  double radius = 0.02;  // footprint radius, used for stacking
  int goal = -1;          // bin or peg index; -1 when the task has none
};

struct BinSpec {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();

  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

struct PegSpec {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double radius = 0.01;
  double height = 0.1;
};

struct TaskSpec {
  TaskKind kind = TaskKind::lifting;
  double time_limit = 30.0;  // seconds
  Eigen::Vector3d home_position = Eigen::Vector3d::Zero();
  /// Half-width of the uniform xy perturbation applied by randomized resets.
  double reset_jitter = 0.0;
  std::vector<ObjectSpec> objects;
  // lifting
  double lift_height = 0.10;
  // picking
  std::vector<BinSpec> bins;
  // assembly
  std::vector<PegSpec> pegs;
  double radial_tolerance = 0.015;

  void validate() const;
  static TaskSpec from_json(std::string_view text);
};

const TaskSpec& builtin_task(TaskKind kind);

}  // namespace teleopforge::sim
