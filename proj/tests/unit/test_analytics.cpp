#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "teleopforge/analytics/stats.hpp"

using namespace teleopforge;
using namespace teleopforge::analytics;

namespace {

// Evaluate |F1 - F2| at every pooled point by counting.
double brute_force_d(const std::vector<double>& x, const std::vector<double>& y) {
  std::set<double> pooled(x.begin(), x.end());
  pooled.insert(y.begin(), y.end());
  double d = 0.0;
  for (double t : pooled) {
    const double f1 = std::count_if(x.begin(), x.end(), [&](double v) { return v <= t; }) / double(x.size());
    const double f2 = std::count_if(y.begin(), y.end(), [&](double v) { return v <= t; }) / double(y.size());
    d = std::max(d, std::abs(f1 - f2));
  }
  return d;
}

// Jacobi-transformed series, accurate for small lambda where the alternating
// series converges slowly.
double q_ks_theta(double lambda) {
  double s = 0.0;
  for (int k = 1; k < 200; ++k) {
    s += std::exp(-(2 * k - 1) * (2 * k - 1) * std::numbers::pi * std::numbers::pi / (8 * lambda * lambda));
  }
  return 1.0 - std::sqrt(2 * std::numbers::pi) / lambda * s;
}

// Two samples of size 40 whose KS distance is exactly k/40.
std::pair<std::vector<double>, std::vector<double>> shifted_pair(int k) {
  std::vector<double> x, y;
  for (int i = 0; i < 40; ++i) {
    x.push_back(i + 1.0);
    y.push_back(i + 1.0 + k - 0.5);
  }
  return {x, y};
}

demostore::EpisodeRecord synthetic(std::vector<std::vector<sim::SimEvent>> events_per_tick, double dt = 0.02) {
  demostore::EpisodeRecord r;
  r.header.dt = dt;
  for (std::size_t i = 0; i < events_per_tick.size(); ++i) {
    demostore::TickRecord t;
    t.tick = i;
    t.q_target = Eigen::VectorXd::Zero(7);
    t.events = events_per_tick[i];
    r.ticks.push_back(t);
  }
  demostore::TickRecord last;
  last.tick = events_per_tick.size();
  r.ticks.push_back(last);
  r.header.completion_time = events_per_tick.size() * dt;
  return r;
}

}  // namespace

TEST_CASE("identical samples") {
  const std::vector<double> x{3, 1, 4, 1, 5, 9, 2, 6};
  const auto r = ks_two_sample(x, x);
  CHECK(r.D == 0.0);
  CHECK(r.p == 1.0);
  CHECK(r.n1 == 8);
}

TEST_CASE("reference p-values at n = 40") {
  CHECK(std::abs(ks_p_value(0.225, 40, 40) - 0.231) <= 0.002);
  CHECK(std::abs(ks_p_value(0.375, 40, 40) - 0.005) <= 0.001);
  CHECK(std::abs(ks_p_value(0.325, 40, 40) - 0.022) <= 0.002);
  for (double d : {0.575, 0.725, 0.900}) CHECK(ks_p_value(d, 40, 40) < 0.0005);

  // Same values reached from actual samples.
  for (int k : {9, 13, 15, 23, 29, 36}) {
    auto [x, y] = shifted_pair(k);
    const auto r = ks_two_sample(x, y);
    CHECK(r.D == doctest::Approx(k / 40.0));
  }
}

TEST_CASE("q_ks agrees with the theta-function series") {
  for (double lambda = 0.3; lambda < 3.0; lambda += 0.05) {
    CHECK(std::abs(q_ks(lambda) - q_ks_theta(lambda)) < 1e-9);
  }
  CHECK(q_ks(0.0) == 1.0);
  CHECK(q_ks(0.01) == 1.0);
  CHECK(q_ks(10.0) < 1e-80);
}

TEST_CASE("D against brute force on random small samples") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> size(1, 15);
  std::uniform_int_distribution<int> val(0, 8);  // plenty of ties
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> x(static_cast<std::size_t>(size(rng))), y(static_cast<std::size_t>(size(rng)));
    for (auto& v : x) v = val(rng);
    for (auto& v : y) v = val(rng);
    REQUIRE(ks_statistic(x, y) == brute_force_d(x, y));
  }
}

TEST_CASE("KS properties") {
  std::mt19937_64 rng(5);
  std::lognormal_distribution<double> t(3.0, 0.4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(30), y(45);
    for (auto& v : x) v = t(rng);
    for (auto& v : y) v = t(rng) * 1.2;
    const auto a = ks_two_sample(x, y);
    const auto b = ks_two_sample(y, x);
    CHECK(a.D == b.D);
    CHECK(a.p == b.p);
    CHECK(a.D >= 0.0);
    CHECK(a.D <= 1.0);
    CHECK(a.p >= 0.0);
    CHECK(a.p <= 1.0);
    for (auto& v : x) v *= 3.7;
    for (auto& v : y) v *= 3.7;
    CHECK(ks_statistic(x, y) == a.D);
  }
  double prev = 1.0;
  for (double d = 0.0; d <= 1.0; d += 0.01) {
    const double p = ks_p_value(d, 25, 40);
    CHECK(p <= prev + 1e-12);
    prev = p;
  }
  const std::vector<double> empty;
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(ks_two_sample(empty, one), std::invalid_argument);
  CHECK_THROWS_AS(ks_two_sample(one, empty), std::invalid_argument);
}

TEST_CASE("summaries") {
  const std::vector<double> single{10.0};
  auto s = summarize_values("g", single);
  CHECK(s.mean == 10.0);
  CHECK(s.std == 0.0);
  CHECK(s.count == 1);
  const std::vector<double> four{1, 2, 3, 4};
  s = summarize_values("g", four);
  CHECK(s.mean == 2.5);
  CHECK(s.std == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(s.std == doctest::Approx(1.2910).epsilon(1e-4));

  std::vector<demostore::IndexRow> rows;
  std::mt19937_64 rng(2);
  const char* tasks[] = {"lifting", "picking", "assembly"};
  for (int i = 0; i < 60; ++i) {
    demostore::IndexRow r;
    r.task = tasks[i % 3];
    r.user = "u" + std::to_string(i % 4);
    r.success = i % 7 != 0;
    r.completion_time = std::uniform_real_distribution<double>(5, 100)(rng);
    rows.push_back(r);
  }
  const auto grouped = summarize(rows, GroupKey::task);
  REQUIRE(grouped.size() == 3);
  CHECK(grouped[0].group == "assembly");
  for (const auto& g : grouped) {
    std::vector<demostore::IndexRow> filtered;
    for (const auto& r : rows) {
      if (r.task == g.group) filtered.push_back(r);
    }
    const auto direct = summarize(filtered, GroupKey::task);
    REQUIRE(direct.size() == 1);
    CHECK(direct[0].mean == g.mean);
    CHECK(direct[0].std == g.std);
    CHECK(direct[0].count == g.count);
  }
  CHECK(summarize(rows, GroupKey::user).size() == 4);
  std::ostringstream table, csv;
  write_summary_table(table, grouped, GroupKey::task);
  write_summary_csv(csv, grouped, GroupKey::task);
  CHECK(csv.str().starts_with("task,count,mean_s,std_s\nassembly,"));
  CHECK(table.str().find("picking") != std::string::npos);
  CHECK_THROWS_AS(parse_group_key("colour"), std::invalid_argument);
}

TEST_CASE("stage timings") {
  using sim::EventKind;
  SUBCASE("first grasp at tick 100") {
    std::vector<std::vector<sim::SimEvent>> ev(150);
    ev[99].push_back({EventKind::attach, 0, 100});
    const auto st = stage_timings(synthetic(ev));
    REQUIRE(st.time_to_first_grasp);
    CHECK(*st.time_to_first_grasp == doctest::Approx(2.0));
    REQUIRE(st.objects.size() == 1);
    CHECK_FALSE(st.objects[0].time_grasp_to_place);
  }
  SUBCASE("sequential objects, regrasp") {
    std::vector<std::vector<sim::SimEvent>> ev(400);
    ev[49].push_back({EventKind::attach, 2, 50});
    ev[69].push_back({EventKind::detach, 2, 70});  // fumble
    ev[79].push_back({EventKind::attach, 2, 80});
    ev[129].push_back({EventKind::detach, 2, 130});
    ev[199].push_back({EventKind::attach, 0, 200});
    ev[299].push_back({EventKind::detach, 0, 300});
    const auto r = synthetic(ev);
    const auto st = stage_timings(r);
    REQUIRE(st.objects.size() == 2);
    CHECK(st.objects[0].object_id == 2);
    CHECK(st.objects[0].time_to_grasp == doctest::Approx(1.0));
    CHECK(*st.objects[0].time_grasp_to_place == doctest::Approx(1.0));
    CHECK(st.objects[1].time_to_grasp == doctest::Approx(1.4));
    CHECK(*st.objects[1].time_grasp_to_place == doctest::Approx(2.0));
    double sum = 0;
    for (const auto& o : st.objects) sum += o.time_to_grasp + *o.time_grasp_to_place;
    CHECK(sum <= r.header.completion_time);
  }
  SUBCASE("no grasp") {
    std::vector<std::vector<sim::SimEvent>> ev(10);
    const auto st = stage_timings(synthetic(ev));
    CHECK_FALSE(st.time_to_first_grasp);
    CHECK(st.objects.empty());
  }
}

TEST_CASE("histogram") {
  const std::vector<double> v{1, 2, 2, 3, 4, 5};
  const auto h = histogram(v, 4);
  REQUIRE(h.size() == 4);
  CHECK(h[0].lo == 1.0);
  CHECK(h[3].hi == 5.0);
  std::size_t total = 0;
  for (const auto& b : h) total += b.count;
  CHECK(total == v.size());
  CHECK(h[3].count == 2);  // 4 and the inclusive top edge
  std::ostringstream out;
  write_histogram_csv(out, h);
  CHECK(out.str().starts_with("lo,hi,count\n1,2,"));
}
