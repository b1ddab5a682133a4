#include "teleopforge/learn/demonstrator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace teleopforge::learn {

namespace {

constexpr double kMoveTolerance = 0.004;
constexpr int kWaypointSteps = 60;
constexpr double kCarryHeight = 0.22;

class Script {
 public:
  Script(const sim::Simulator& sim, const DemonstratorOptions& opt)
      : sim_(sim), opt_(opt), env_(sim, opt.env), rng_(opt.seed), noise_(0.0, 1.0) {
    const auto start = sim.reset(rng_);
    env_.reset(start);
    demostore::EpisodeHeader h;
    h.task = std::string(sim::to_string(sim.task().kind));
    h.user = "scripted";
    h.condition = kEnvCondition;
    h.arm_config_hash = sim.arm().hash();
    h.dt = sim.params().dt;
    recorder_.emplace(std::move(h), start);
    const double limit = sim.task().time_limit / (sim.params().dt * opt.env.substeps);
    budget_ = std::max(1, static_cast<int>(limit));
  }

  demostore::EpisodeRecord run() {
    const auto& task = sim_.task();
    for (std::size_t i = 0; i < task.objects.size() && !finished(); ++i) {
      for (int attempt = 0; attempt <= opt_.grasp_retries && !finished(); ++attempt) {
        if (!pick(i)) continue;
        if (task.kind == sim::TaskKind::lifting) {
          move_to(position(i) + Eigen::Vector3d(0, 0, task.lift_height + 0.05) + jitter(opt_.noise));
          break;
        }
        place(i);
        if (sim::check_success(env_.state(), task) || object_at_goal(task, env_.state(), i)) break;
      }
    }
    const double ms = static_cast<double>(recorder_->steps()) * sim_.params().dt * 1000.0;
    return recorder_->finish(env_.state().task_done, ms);
  }

 private:
  bool finished() const { return env_.state().task_done || budget_ <= 0; }

  Eigen::Vector3d position(std::size_t i) const { return env_.state().objects[i].pose.position; }
  Eigen::Vector3d ee() const { return sim_.ee_pose(env_.state()).position; }

  Eigen::Vector3d jitter(double sigma) {
    return Eigen::Vector3d(noise_(rng_), noise_(rng_), noise_(rng_)) * sigma;
  }

  void act(const Eigen::Vector3d& delta) {
    Action a;
    a.head<3>() = (delta / opt_.env.action_scale).cwiseMax(-1.0).cwiseMin(1.0);
    a[3] = closed_ ? 1.0 : -1.0;
    env_.step(a, *recorder_);
    --budget_;
  }

  bool move_to(Eigen::Vector3d w) {
    w.z() = std::max(w.z(), 0.0);
    for (int k = 0; k < kWaypointSteps && !finished(); ++k) {
      const Eigen::Vector3d d = w - ee();
      if (d.norm() < kMoveTolerance) return true;
      act(d);
    }
    return (w - ee()).norm() < kMoveTolerance;
  }

  void hold(int n) {
    for (int k = 0; k < n && !finished(); ++k) act(Eigen::Vector3d::Zero());
  }

  bool pick(std::size_t i) {
    const Eigen::Vector3d p = position(i);
    if (env_.state().attached_index() == static_cast<int>(i)) return true;
    if (closed_) {
      closed_ = false;
      hold(1);
    }
    move_to(p + Eigen::Vector3d(0, 0, 0.06) + jitter(opt_.noise));
    move_to(p + jitter(opt_.noise));
    closed_ = true;
    hold(2);
    if (env_.state().attached_index() == static_cast<int>(i)) return true;
    closed_ = false;
    hold(1);
    return false;
  }

  void place(std::size_t i) {
    const auto& task = sim_.task();
    const auto& spec = task.objects[i];
    Eigen::Vector3d goal;
    double fine = opt_.noise;
    if (task.kind == sim::TaskKind::picking) {
      const auto& bin = task.bins.at(static_cast<std::size_t>(spec.goal));
      goal = 0.5 * (bin.min + bin.max);
      goal.z() = spec.half_height + 0.03;
    } else {
      const auto& peg = task.pegs.at(static_cast<std::size_t>(spec.goal));
      goal << peg.position.x(), peg.position.y(), peg.height + spec.half_height + 0.02;
      // Keep the drop point well inside the radial tolerance.
      fine = std::min(opt_.noise, task.radial_tolerance / 6.0);
    }
    move_to(Eigen::Vector3d(ee().x(), ee().y(), kCarryHeight) + jitter(opt_.noise));
    move_to(Eigen::Vector3d(goal.x(), goal.y(), kCarryHeight) + jitter(opt_.noise));
    Eigen::Vector3d j = jitter(fine);
    j.z() = 0.0;
    move_to(goal + j);
    closed_ = false;
    hold(1);
    move_to(Eigen::Vector3d(ee().x(), ee().y(), kCarryHeight));
  }

  const sim::Simulator& sim_;
  const DemonstratorOptions& opt_;
  Env env_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> noise_;
  std::optional<demostore::EpisodeRecorder> recorder_;
  int budget_ = 0;
  bool closed_ = false;
};

void check_reachable(const sim::Simulator& sim) {
  const auto& task = sim.task();
  std::vector<Eigen::Vector3d> points;
  for (const auto& o : task.objects) points.push_back(o.initial_position);
  for (const auto& b : task.bins) points.push_back(0.5 * (b.min + b.max));
  for (const auto& p : task.pegs) points.emplace_back(p.position.x(), p.position.y(), p.height + 0.03);
  for (const auto& p : points) {
    const auto ik = sim::solve_ik(sim.arm(), sim.home_q(), {p, sim::downward_orientation()});
    if (!ik.converged) {
      throw DemoGenerationError("waypoint (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) + ", " +
                                std::to_string(p.z()) + ") is out of reach for arm " + sim.arm().name);
    }
  }
}

}  // namespace

demostore::EpisodeRecord scripted_demonstrator(const sim::Simulator& sim, const DemonstratorOptions& options) {
  if (options.noise < 0.0 || !std::isfinite(options.noise)) throw std::invalid_argument("noise must be >= 0");
  check_reachable(sim);
  return Script(sim, options).run();
}

}  // namespace teleopforge::learn
