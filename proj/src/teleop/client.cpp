#include "teleopforge/teleop/client.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <optional>
#include <thread>

#include "teleopforge/teleop/engine.hpp"
#include "teleopforge/teleop/server.hpp"
#include "teleopforge/transport/channel.hpp"

namespace teleopforge::teleop {

using namespace std::chrono_literals;
using transport::wall_clock_ms;
using Clock = std::chrono::steady_clock;

transport::SessionInfo join(const std::string& coordinator, const std::string& user, const std::string& task,
                            std::chrono::milliseconds timeout) {
  const auto [host, port] = transport::parse_endpoint(coordinator);
  auto ch = transport::Channel::connect(host, port, timeout);
  ch->send(transport::JoinRequest{user, task});
  const auto reply = ch->receive(timeout);
  ch->close();
  if (!reply) throw JoinError(transport::ErrorCode::internal, "no reply to JOIN from " + coordinator);
  if (const auto* s = std::get_if<transport::SessionInfo>(&*reply)) return *s;
  if (const auto* e = std::get_if<transport::ErrorMessage>(&*reply)) throw JoinError(e->code, e->message);
  throw JoinError(transport::ErrorCode::protocol, "unexpected reply to JOIN");
}

DelayStats delay_stats(std::vector<double> v) {
  DelayStats s;
  s.n = v.size();
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  double sum = 0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  auto q = [&](double f) { return v[static_cast<std::size_t>(f * static_cast<double>(v.size() - 1))]; };
  s.p50 = q(0.5);
  s.p95 = q(0.95);
  s.max = v.back();
  return s;
}

LiftingScript::LiftingScript(const transport::StateFrame& first, double command_hz, double speed)
    : step_(speed / command_hz) {
  if (first.objects.empty()) throw std::runtime_error("scene has no objects");
  const Eigen::Vector3d cube = first.objects.front().pose.position;
  above_ = cube + Eigen::Vector3d(0, 0, 0.06);
  at_ = cube;
  lifted_ = cube + Eigen::Vector3d(0, 0, 0.17);
  // Controller starts where the end effector is, so the clutch offset is identity.
  cmd_.position = first.ee.position;
  cmd_.orientation = first.ee.orientation;
  cmd_.engaged = true;
}

bool LiftingScript::move_toward(const Eigen::Vector3d& goal) {
  const Eigen::Vector3d d = goal - cmd_.position;
  if (d.norm() <= step_) {
    cmd_.position = goal;
    return true;
  }
  cmd_.position += d.normalized() * step_;
  return false;
}

transport::PoseCommand LiftingScript::next(const transport::StateFrame& f, double client_timestamp) {
  switch (phase_) {
    case Phase::approach:
      if (move_toward(above_)) phase_ = Phase::descend;
      break;
    case Phase::descend:
      if (move_toward(at_)) phase_ = Phase::settle;
      break;
    case Phase::settle:
      if ((f.ee.position - at_).norm() < 0.008) {
        cmd_.gripper = true;
        phase_ = Phase::grasp;
      }
      break;
    case Phase::grasp:
      if (!f.objects.empty() && f.objects.front().attached) phase_ = Phase::lift;
      break;
    case Phase::lift:
      if (move_toward(lifted_)) phase_ = Phase::hold;
      break;
    case Phase::hold:
      break;
  }
  ++cmd_.seq;
  cmd_.client_timestamp = client_timestamp;
  return cmd_;
}

namespace {

struct Feedback {
  std::mutex mu;
  std::optional<transport::StateFrame> latest;
  std::optional<transport::DemoDone> done;
  std::optional<transport::ErrorMessage> error;
  std::vector<double> uplink;
  std::vector<double> downlink;
  std::uint64_t frames = 0;
  std::uint64_t first_tick = 0;
  std::uint64_t last_tick = 0;
  std::uint64_t haptics = 0;
  double last_echo = -1.0;
};

}  // namespace

ClientReport run_scripted_client(const ClientOptions& opt) {
  ClientReport report;
  auto log = [&](const std::string& m) {
    if (opt.log) opt.log(m);
  };
  const auto t_start = Clock::now();
  const auto deadline = t_start + opt.timeout;
  try {
    if (opt.task != "lifting") throw std::invalid_argument("the scripted client only solves lifting");
    const auto session = join(opt.coordinator, opt.user, opt.task);
    report.session_id = session.session_id;
    report.endpoint = opt.resolve ? opt.resolve(session.endpoint) : session.endpoint;
    log("session " + session.session_id + " at " + session.endpoint + " via " + report.endpoint);

    const auto [host, port] = transport::parse_endpoint(report.endpoint);
    auto ch = transport::Channel::connect(host, port, 10s);
    ch->send(transport::Hello{session.token});
    const auto hello = ch->receive(10s);
    if (!hello || !std::holds_alternative<transport::Hello>(*hello)) {
      const auto* e = hello ? std::get_if<transport::ErrorMessage>(&*hello) : nullptr;
      throw std::runtime_error(e ? "teleop server refused: " + e->message : "no HELLO from teleop server");
    }

    Feedback fb;
    std::atomic<bool> stop{false};
    std::thread reader([&] {
      while (!stop) {
        std::optional<transport::Message> m;
        try {
          m = ch->receive(100ms);
        } catch (const transport::WireError&) {
          continue;
        }
        if (!m) {
          if (!ch->is_open()) return;
          continue;
        }
        const double now = wall_clock_ms();
        std::lock_guard lock(fb.mu);
        if (auto* f = std::get_if<transport::StateFrame>(&*m)) {
          if (fb.frames == 0) fb.first_tick = f->tick;
          fb.last_tick = f->tick;
          ++fb.frames;
          fb.downlink.push_back(now - f->server_timestamp);
          if (f->echoed_client_timestamp > 0 && f->echoed_client_timestamp != fb.last_echo) {
            fb.last_echo = f->echoed_client_timestamp;
            fb.uplink.push_back(f->command_received_timestamp - f->echoed_client_timestamp);
          }
          fb.latest = std::move(*f);
        } else if (std::holds_alternative<transport::HapticEvent>(*m)) {
          ++fb.haptics;
        } else if (auto* d = std::get_if<transport::DemoDone>(&*m)) {
          fb.done = *d;
        } else if (auto* e = std::get_if<transport::ErrorMessage>(&*m)) {
          fb.error = *e;
        }
      }
    });

    struct Joiner {
      std::atomic<bool>& stop;
      std::thread& t;
      ~Joiner() {
        stop = true;
        if (t.joinable()) t.join();
      }
    } joiner{stop, reader};

    auto snapshot = [&] {
      std::lock_guard lock(fb.mu);
      return fb.latest;
    };
    // Wait for the first frame to anchor the controller on the current ee pose.
    std::optional<transport::StateFrame> first;
    while (!(first = snapshot()) && Clock::now() < deadline && ch->is_open()) std::this_thread::sleep_for(5ms);
    if (!first) throw std::runtime_error("no state frame from teleop server");

    LiftingScript script(*first, opt.command_hz, opt.speed);
    const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / opt.command_hz));
    auto next = Clock::now();
    auto last_heartbeat = Clock::now();

    while (Clock::now() < deadline) {
      {
        std::lock_guard lock(fb.mu);
        if (fb.done || fb.error) break;
      }
      if (!ch->is_open()) throw std::runtime_error("teleop channel closed");
      const auto cmd = script.next(*snapshot(), wall_clock_ms());
      ch->send(cmd);
      ++report.commands_sent;
      if (Clock::now() - last_heartbeat >= kHeartbeatPeriod) {
        ch->send(transport::Heartbeat{});
        last_heartbeat = Clock::now();
      }
      next += period;
      std::this_thread::sleep_until(next);
    }
    report.wall_time = std::chrono::duration<double>(Clock::now() - t_start).count();
    stop = true;
    reader.join();
    ch->close();


    std::lock_guard lock(fb.mu);
    report.uplink = delay_stats(fb.uplink);
    report.downlink = delay_stats(fb.downlink);
    report.frames_received = fb.frames;
    if (fb.frames > 0) {
      std::uint64_t expected = 0;
      for (auto t = fb.first_tick; t <= fb.last_tick; ++t) {
        // Frames carry the tick count after the tick that produced them.
        expected += SessionEngine::frame_due_at(t - 1) ? 1 : 0;
      }
      report.frames_missed = expected > fb.frames ? expected - fb.frames : 0;
    }
    report.haptic_events = fb.haptics;
    if (fb.error) {
      report.error = "server error: " + fb.error->message;
    } else if (!fb.done) {
      report.error = "timed out before task completion";
    } else {
      report.success = fb.done->success;
      report.completion_time = fb.done->completion_time;
      report.demo_path = fb.done->path;
    }
  } catch (const std::exception& e) {
    report.error = e.what();
    report.wall_time = std::chrono::duration<double>(Clock::now() - t_start).count();
  }
  return report;
}

}  // namespace teleopforge::teleop
