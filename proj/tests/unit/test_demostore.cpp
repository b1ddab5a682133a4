#include <fstream>
#include <random>

#include "doctest.h"
#include "teleopforge/demostore/demo.hpp"

using namespace teleopforge;
using namespace teleopforge::demostore;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("tf_demostore_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Random q_target wander around home with a few gripper toggles; not a real
// task attempt, just enough motion to exercise every field.
EpisodeRecord wander(const sim::Simulator& s, int steps, std::uint64_t seed, const std::string& user = "u1") {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.3);
  EpisodeHeader h;
  h.task = std::string(sim::to_string(s.task().kind));
  h.user = user;
  h.arm_config_hash = s.arm().hash();
  h.dt = s.params().dt;
  h.started_at = 1.7e12;
  auto state = s.reset();
  EpisodeRecorder rec(h, state);
  Eigen::VectorXd target = s.home_q();
  for (int i = 0; i < steps; ++i) {
    if (i % 50 == 0) {
      for (Eigen::Index j = 0; j < target.size(); ++j) target[j] = s.home_q()[j] + n(rng);
    }
    const bool grip = (i / 120) % 2 == 1;
    transport::PoseCommand cmd;
    cmd.seq = static_cast<std::uint64_t>(i + 1);
    cmd.client_timestamp = 1000.0 + i * 16.7;
    cmd.position = s.ee_pose(state).position;
    cmd.gripper = grip;
    cmd.engaged = true;
    const auto r = s.step(state, target, grip);
    rec.record_step(target, grip, i % 3 == 0 ? std::optional(cmd) : std::nullopt, r, 0.0);
    state = r.state;
  }
  return rec.finish(true, 1.7e12 + steps * 20.0);
}

sim::Simulator lifting() { return sim::Simulator(sim::default_arm(), sim::builtin_task(sim::TaskKind::lifting)); }

}  // namespace

TEST_CASE("500-tick round trip, plain and gzip") {
  const auto s = lifting();
  const auto rec = wander(s, 500, 1);
  CHECK(rec.step_count() == 500);
  CHECK(rec.ticks.size() == 501);
  CHECK(rec.header.completion_time == doctest::Approx(10.0));
  TempDir dir;
  const auto plain = write_demo(rec, dir.path, false);
  const auto gz = write_demo(rec, dir.path, true);
  CHECK(plain.string().ends_with(".djsonl"));
  CHECK(gz.string().ends_with(".djsonl.gz"));
  CHECK(fs::file_size(gz) < fs::file_size(plain));
  const auto a = read_demo(plain);
  const auto b = read_demo(gz);
  CHECK(a == rec);
  CHECK(b == rec);
  CHECK(serialize(a) == serialize(rec));
}

TEST_CASE("replay reproduces recorded states") {
  const auto s = lifting();
  const auto rec = wander(s, 300, 2);
  const auto report = replay(rec, s);
  CHECK(report.steps == 300);
  CHECK(report.max_deviation <= 1e-9);
  CHECK(state_distance(report.final_state, rec.final_state()) <= 1e-9);

  auto other = sim::default_arm();
  other.joints[0].velocity_limit = 1.0;
  const sim::Simulator mismatched(other, s.task());
  CHECK_THROWS_AS(replay(rec, mismatched), std::invalid_argument);
}

TEST_CASE("corruption is detected and skipped by the index") {
  const auto s = lifting();
  const auto rec = wander(s, 40, 3);
  TempDir dir;
  const auto good = write_demo(rec, dir.path);
  const auto text = serialize(rec);

  const auto cut = dir.path / "cut.djsonl";
  {
    std::ofstream(cut) << text.substr(0, text.size() / 2);
  }
  try {
    read_demo(cut);
    FAIL("expected corrupt-file error");
  } catch (const CorruptFileError& e) {
    CHECK(std::string(e.what()).find(cut.string()) != std::string::npos);
  }

  // All lines intact but footer missing.
  const auto nofoot = dir.path / "nofoot.djsonl";
  {
    const auto last = text.rfind('\n', text.size() - 2);
    std::ofstream(nofoot) << text.substr(0, last + 1);
  }
  CHECK_THROWS_AS(read_demo(nofoot), CorruptFileError);

  // Truncated gzip stream.
  const auto gz = write_demo(rec, dir.path / "sub", true);
  const auto gz_cut = dir.path / "sub" / "cut.djsonl.gz";
  fs::copy_file(gz, gz_cut);
  fs::resize_file(gz_cut, fs::file_size(gz) / 2);
  CHECK_THROWS_AS(read_demo(gz_cut), CorruptFileError);

  std::vector<std::string> seen;
  const auto index = build_index(dir.path, [&](const std::string& w) { seen.push_back(w); });
  CHECK(index.rows.size() == 2);
  CHECK(index.warnings.size() == 3);
  CHECK(seen == index.warnings);
  CHECK(index.totals == aggregate(index.rows));
  CHECK(index.totals.successful == 2);
}

TEST_CASE("index aggregates match recomputation") {
  const auto s = lifting();
  TempDir dir;
  std::vector<double> times;
  for (int i = 0; i < 6; ++i) {
    auto rec = wander(s, 10 + 7 * i, 10 + i, i % 2 ? "alice" : "bob");
    rec.header.success = i != 4;
    write_demo(rec, dir.path, i % 2 == 0);
    if (rec.header.success) times.push_back(rec.header.completion_time);
  }
  const auto index = build_index(dir.path);
  REQUIRE(index.rows.size() == 6);
  CHECK(index.totals.count == 6);
  CHECK(index.totals.successful == 5);
  double mean = 0;
  for (double t : times) mean += t;
  mean /= static_cast<double>(times.size());
  CHECK(index.totals.mean_completion_time == doctest::Approx(mean).epsilon(1e-12));
  CHECK(std::is_sorted(index.rows.begin(), index.rows.end(),
                       [](const IndexRow& a, const IndexRow& b) { return a.path < b.path; }));
  CHECK(index.successful("lifting").size() == 5);
  CHECK(index.successful("picking").empty());
}

TEST_CASE("reset sampling") {
  const auto s = lifting();
  SUBCASE("single state demo") {
    EpisodeRecorder r({.task = "lifting", .user = "", .condition = "", .arm_config_hash = s.arm().hash()}, s.reset());
    const auto rec = r.finish(true);
    REQUIRE(rec.ticks.size() == 1);
    ResetSampler sampler({rec});
    std::mt19937_64 rng(0);
    for (int i = 0; i < 20; ++i) CHECK(sampler.sample(rng) == rec.ticks[0].state);
  }
  SUBCASE("uniform over demos") {
    // Demos of equal length with distinguishable objects; 10k draws.
    std::vector<EpisodeRecord> demos;
    for (int d = 0; d < 10; ++d) {
      auto start = s.reset();
      start.objects[0].id = 100 + d;
      EpisodeRecorder r({.task = "lifting", .user = "", .condition = "", .arm_config_hash = ""}, start);
      auto state = start;
      for (int k = 0; k < 5 + d % 2; ++k) {
        auto res = s.step(state, s.home_q(), false);
        r.record_step(s.home_q(), false, std::nullopt, res, 0.0);
        state = res.state;
      }
      demos.push_back(r.finish(true));
    }
    // Equalize lengths.
    for (auto& d : demos) d.ticks.resize(6);
    ResetSampler sampler(demos);
    std::mt19937_64 rng(11);
    std::vector<int> counts(10, 0);
    std::vector<int> tick_counts(6, 0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      const auto st = sampler.sample(rng);
      ++counts[static_cast<std::size_t>(st.objects[0].id - 100)];
      ++tick_counts[st.tick];
    }
    for (int c : counts) CHECK(std::abs(c / double(n) - 0.1) <= 0.01);
    for (int c : tick_counts) CHECK(std::abs(c / double(n) - 1.0 / 6) <= 0.015);
  }
  SUBCASE("empty dataset") {
    CHECK_THROWS_AS(ResetSampler({}), EmptyDatasetError);
    TempDir dir;
    CHECK_THROWS_AS(sample_reset_state(build_index(dir.path), "lifting", 1), EmptyDatasetError);
  }
  SUBCASE("from disk, restorable") {
    TempDir dir;
    const auto rec = wander(s, 30, 5);
    write_demo(rec, dir.path);
    const auto st = sample_reset_state(build_index(dir.path), "lifting", 9);
    bool found = false;
    for (const auto& t : rec.ticks) found = found || t.state == st;
    CHECK(found);
    // steppable
    CHECK(s.step(st, s.home_q(), false).state.tick == st.tick + 1);
  }
}
