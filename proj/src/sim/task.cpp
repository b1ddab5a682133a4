#include "teleopforge/sim/task.hpp"

#include <stdexcept>

#include "json.hpp"

#include "teleopforge/builtin_configs.hpp"

namespace teleopforge::sim {

namespace {

template <int N>
Eigen::Matrix<double, N, 1> vec(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != N) throw std::invalid_argument("task config: bad vector");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

}  // namespace

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::lifting: return "lifting";
    case TaskKind::picking: return "picking";
    case TaskKind::assembly: return "assembly";
  }
  return "unknown";
}

std::optional<TaskKind> try_parse_task_kind(std::string_view name) {
  if (name == "lifting") return TaskKind::lifting;
  if (name == "picking") return TaskKind::picking;
  if (name == "assembly") return TaskKind::assembly;
  return std::nullopt;
}

TaskKind parse_task_kind(std::string_view name) {
  if (auto kind = try_parse_task_kind(name)) return *kind;
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

void TaskSpec::validate() const {
  if (!(time_limit > 0.0)) throw std::invalid_argument("task time limit must be positive");
  if (objects.empty()) throw std::invalid_argument("task has no objects");
  switch (kind) {
    case TaskKind::lifting:
      if (!(lift_height > 0.0)) throw std::invalid_argument("lift height must be positive");
      break;
    case TaskKind::picking:
      for (const auto& b : bins) {
        if (!((b.max.array() > b.min.array()).all())) throw std::invalid_argument("empty bin box");
      }
      for (const auto& o : objects) {
        if (o.goal < 0 || static_cast<std::size_t>(o.goal) >= bins.size()) {
          throw std::invalid_argument("object '" + o.name + "' has no valid bin");
        }
      }
      break;
    case TaskKind::assembly:
      if (!(radial_tolerance > 0.0)) throw std::invalid_argument("radial tolerance must be positive");
      for (const auto& p : pegs) {
        if (!(p.height > 0.0)) throw std::invalid_argument("peg height must be positive");
      }
      for (const auto& o : objects) {
        if (o.goal < 0 || static_cast<std::size_t>(o.goal) >= pegs.size()) {
          throw std::invalid_argument("nut '" + o.name + "' has no valid peg");
        }
      }
      break;
  }
}

TaskSpec TaskSpec::from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  TaskSpec t;
  t.kind = parse_task_kind(j.at("kind").get<std::string>());
  t.time_limit = j.at("time_limit").get<double>();
  t.home_position = vec<3>(j.at("home_position"));
  t.reset_jitter = j.value("reset_jitter", 0.0);
  t.lift_height = j.value("lift_height", 0.10);
  t.radial_tolerance = j.value("radial_tolerance", 0.015);
  for (const auto& o : j.at("objects")) {
    ObjectSpec spec;
    spec.id = o.at("id").get<int>();
    spec.name = o.value("name", "object");
    spec.initial_position = vec<3>(o.at("position"));
    spec.half_height = o.at("half_height").get<double>();
    spec.radius = o.at("radius").get<double>();
    spec.goal = o.value("goal", -1);
    t.objects.push_back(spec);
  }
  if (j.contains("bins")) {
    for (const auto& b : j.at("bins")) t.bins.push_back({vec<3>(b.at("min")), vec<3>(b.at("max"))});
  }
  if (j.contains("pegs")) {
    for (const auto& p : j.at("pegs")) {
      t.pegs.push_back({vec<2>(p.at("position")), p.at("radius").get<double>(), p.at("height").get<double>()});
    }
  }
  t.validate();
  return t;
}

const TaskSpec& builtin_task(TaskKind kind) {
  static const TaskSpec lifting = TaskSpec::from_json(builtin::kTaskLifting);
  static const TaskSpec picking = TaskSpec::from_json(builtin::kTaskPicking);
  static const TaskSpec assembly = TaskSpec::from_json(builtin::kTaskAssembly);
  switch (kind) {
    case TaskKind::lifting: return lifting;
    case TaskKind::picking: return picking;
    case TaskKind::assembly: return assembly;
  }
  throw std::invalid_argument("unknown task kind");
}

}  // namespace teleopforge::sim
