#include <chrono>
#include <random>
#include <thread>

#include "doctest.h"
#include "teleopforge/coord/coordinator.hpp"
#include "teleopforge/teleop/client.hpp"
#include "teleopforge/teleop/engine.hpp"
#include "teleopforge/teleop/scheduler.hpp"
#include "teleopforge/teleop/server.hpp"

using namespace teleopforge;
using namespace teleopforge::teleop;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("tf_teleop_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

transport::LatestCommandCell::Taken taken(const transport::PoseCommand& c) { return {c, 0.0}; }

transport::PoseCommand pose_cmd(std::uint64_t seq, const Eigen::Vector3d& p, bool engaged, bool gripper = false) {
  transport::PoseCommand c;
  c.seq = seq;
  c.position = p;
  c.orientation = sim::downward_orientation();
  c.engaged = engaged;
  c.gripper = gripper;
  return c;
}

// Feeds the lifting script into the engine at 60 Hz against a 50 Hz loop, with
// the script seeing the engine's frames immediately.
std::uint64_t drive_lifting(SessionEngine& engine, int max_ticks, int* demos_done = nullptr) {
  auto frame = engine.frame(0);
  LiftingScript script(frame, 60.0, 0.15);
  double client_clock = 0;
  std::uint64_t ticks = 0;
  for (int t = 0; t < max_ticks; ++t) {
    std::optional<transport::LatestCommandCell::Taken> cmd;
    // 6 commands per 5 ticks; latest wins.
    transport::LatestCommandCell cell;
    while (client_clock < (t + 1) * 20.0) {
      cell.offer(script.next(frame, client_clock));
      client_clock += 1000.0 / 60.0;
    }
    const auto out = engine.tick(cell.take());
    frame = engine.frame(0);
    ++ticks;
    if (out.demo_done) {
      if (demos_done) ++*demos_done;
      break;
    }
  }
  return ticks;
}

}  // namespace

TEST_CASE("clutch map") {
  Workspace ws;
  const sim::Pose ee{{0.3, 0.0, 0.2}, sim::downward_orientation()};
  SUBCASE("engage does not jump") {
    ClutchMap clutch(ee);
    transport::PoseCommand c;
    c.position = {1.0, -2.0, 0.5};
    c.orientation = Eigen::Quaterniond(Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()));
    c.engaged = true;
    const auto r = clutch.map(c, ee, ws);
    CHECK(r.engage_edge);
    CHECK((r.target.position - ee.position).norm() <= 1e-9);
    CHECK(r.target.orientation.angularDistance(ee.orientation) <= 1e-9);
  }
  SUBCASE("translation carries over") {
    ClutchMap clutch(ee);
    // Controller held in the same orientation as the tool: offset is a pure translation.
    auto c = pose_cmd(1, {0.5, 0.5, 0.5}, true);
    clutch.map(c, ee, ws);
    c.position += Eigen::Vector3d(0.1, 0, 0);
    const auto r = clutch.map(c, ee, ws);
    CHECK_FALSE(r.engage_edge);
    CHECK((r.target.position - (ee.position + Eigen::Vector3d(0.1, 0, 0))).norm() < 1e-12);
  }
  SUBCASE("disengaged freezes target") {
    ClutchMap clutch(ee);
    auto c = pose_cmd(1, ee.position, true);
    clutch.map(c, ee, ws);
    c.position += Eigen::Vector3d(0.05, 0.02, 0);
    const auto moved = clutch.map(c, ee, ws).target;
    c.engaged = false;
    for (int i = 0; i < 10; ++i) {
      c.position += Eigen::Vector3d(0.01, -0.03, 0.02);
      CHECK(clutch.map(c, ee, ws).target == moved);
    }
    // re-engaging captures a fresh offset at the current ee
    c.engaged = true;
    const auto r = clutch.map(c, ee, ws);
    CHECK(r.engage_edge);
    CHECK((r.target.position - ee.position).norm() <= 1e-9);
  }
  SUBCASE("clamped at the table") {
    ClutchMap clutch(ee);
    auto c = pose_cmd(1, ee.position, true);
    clutch.map(c, ee, ws);
    c.position.z() -= 0.5;
    const auto r = clutch.map(c, ee, ws);
    CHECK(r.clamped);
    CHECK(r.target.position.z() == 0.0);
  }
}

TEST_CASE("idle session") {
  SessionEngine engine({});
  const auto start = engine.state();
  int frames = 0;
  for (int t = 0; t < 250; ++t) {
    const auto out = engine.tick(std::nullopt);
    frames += out.frame_due;
    CHECK(out.events.empty());
    CHECK_FALSE(out.demo_done);
  }
  CHECK(engine.state() == start);
  CHECK(engine.episode_reward() == 0.0);
  CHECK(engine.finished().empty());
  CHECK_FALSE(engine.episode_active());
  CHECK(frames == 150);  // 30 Hz out of 50
}

TEST_CASE("scripted lifting stores exactly one successful demo") {
  TempDir dir;
  SessionConfig cfg;
  cfg.storage = dir.path;
  cfg.user = "script";
  SessionEngine engine(cfg);
  int done = 0;
  const auto ticks = drive_lifting(engine, 2000, &done);
  CHECK(done == 1);
  CHECK(ticks < 1000);
  REQUIRE(engine.stored_paths().size() == 1);
  const auto rec = demostore::read_demo(engine.stored_paths()[0]);
  CHECK(rec.header.success);
  CHECK(rec.header.user == "script");
  CHECK(rec.header.completion_time == doctest::Approx((rec.ticks.back().tick - rec.ticks.front().tick) * 0.02));
  const auto replayed = demostore::replay(rec, engine.simulator());
  CHECK(replayed.success);
  CHECK(replayed.max_deviation <= 1e-9);
  // Haptic stream for the record: exactly one attach, no duplicates within a tick.
  int attaches = 0;
  for (const auto& t : rec.ticks) {
    for (std::size_t i = 0; i < t.events.size(); ++i) {
      attaches += t.events[i].kind == sim::EventKind::attach;
      for (std::size_t j = i + 1; j < t.events.size(); ++j) CHECK_FALSE(t.events[i] == t.events[j]);
    }
  }
  CHECK(attaches == 1);
  // Scene was reset for the next demonstration.
  CHECK_FALSE(engine.episode_active());
  CHECK_FALSE(engine.state().task_done);
}

TEST_CASE("reset aborts the episode") {
  SessionEngine engine({});
  engine.tick(taken(pose_cmd(1, engine.simulator().ee_pose(engine.state()).position, true)));
  CHECK(engine.episode_active());
  engine.reset();
  CHECK_FALSE(engine.episode_active());
  CHECK(engine.failures() == 1);
  CHECK(engine.finished().empty());
}

TEST_CASE("engine emits clamp events") {
  SessionEngine engine({});
  const auto ee = engine.simulator().ee_pose(engine.state()).position;
  engine.tick(taken(pose_cmd(1, ee, true)));
  const auto out = engine.tick(taken(pose_cmd(2, ee - Eigen::Vector3d(0, 0, 1.0), true)));
  int clamps = 0;
  for (const auto& e : out.events) clamps += e.kind == sim::EventKind::clamp;
  CHECK(clamps == 1);
}

TEST_CASE("tick scheduler holds 50 Hz over 10 s" * doctest::timeout(30)) {
  TickScheduler s(50.0);
  const auto start = std::chrono::steady_clock::now();
  std::uint64_t ticks = 0;
  while (std::chrono::steady_clock::now() - start < 10s) {
    s.wait_next();
    ++ticks;
    if (ticks % 97 == 0) std::this_thread::sleep_for(15ms);  // occasional slow tick
  }
  CHECK(ticks >= 499);
  CHECK(ticks <= 502);
}

TEST_CASE("server rejects a bad token and serves a good one") {
  ServerOptions opt;
  opt.token = "secret";
  opt.session_id = "s1";
  opt.accept_timeout = 10s;
  TeleopServer server(opt);
  ServerReport report;
  std::thread t([&] { report = server.run(); });
  {
    auto bad = transport::Channel::connect("127.0.0.1", server.port());
    bad->send(transport::Hello{"wrong"});
    const auto reply = bad->receive(5s);
    REQUIRE(reply);
    CHECK(std::get<transport::ErrorMessage>(*reply).code == transport::ErrorCode::auth_failed);
  }
  auto ch = transport::Channel::connect("127.0.0.1", server.port());
  ch->send(transport::Hello{"secret"});
  const auto hello = ch->receive(5s);
  REQUIRE(hello);
  CHECK(std::get<transport::Hello>(*hello).text == "s1");
  int frames = 0;
  const auto until = std::chrono::steady_clock::now() + 500ms;
  while (std::chrono::steady_clock::now() < until) {
    if (auto m = ch->receive(50ms); m && std::holds_alternative<transport::StateFrame>(*m)) ++frames;
  }
  CHECK(frames >= 10);
  CHECK(frames <= 20);
  ch->close();
  t.join();
  CHECK(report.client_connected);
  CHECK(report.end_reason == "client disconnected");
  CHECK(report.successes == 0);
}

TEST_CASE("scripted client through an in-process coordinator") {
  TempDir dir;
  coord::CoordinatorOptions co;
  co.storage = dir.path;
  co.max_sessions = 2;
  coord::Coordinator coordinator(co);
  ClientOptions opt;
  opt.coordinator = coordinator.endpoint();
  opt.timeout = 60s;
  const auto r = run_scripted_client(opt);
  INFO(r.error);
  CHECK(r.success);
  CHECK(r.completion_time > 1.0);
  CHECK(r.completion_time < 15.0);
  CHECK(fs::exists(r.demo_path));
  CHECK(r.uplink.n > 10);
  CHECK(r.uplink.mean >= 0.0);
  CHECK(r.uplink.mean < 50.0);
  CHECK(r.haptic_events >= 1);
  CHECK(coordinator.joins_served() == 1);
}
