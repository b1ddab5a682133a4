// Serial reference vs OpenMP versions of the two hot kernels: PPO rollout
// collection and nearest-neighbor lookup. Results must match; only time differs.
#include <benchmark/benchmark.h>
#include <omp.h>

#include <random>

#include "teleopforge/learn/baselines.hpp"
#include "teleopforge/learn/demonstrator.hpp"
#include "teleopforge/learn/ppo.hpp"
#include "teleopforge/sim/task.hpp"

using namespace teleopforge;

namespace {

const sim::Simulator& lifting() {
  static const sim::Simulator s(sim::default_arm(), sim::builtin_task(sim::TaskKind::lifting));
  return s;
}

const std::vector<demostore::EpisodeRecord>& demos() {
  static const auto d = [] {
    std::vector<demostore::EpisodeRecord> out;
    for (std::uint64_t i = 0; i < 20; ++i) {
      learn::DemonstratorOptions o;
      o.noise = 0.01;
      o.seed = i;
      out.push_back(learn::scripted_demonstrator(lifting(), o));
    }
    return out;
  }();
  return d;
}

void collect(benchmark::State& state, bool parallel) {
  learn::PpoConfig c;
  c.actors = static_cast<int>(state.range(0));
  c.steps_per_actor = 128;
  learn::PpoTrainer trainer(lifting(), c, demos());
  for (auto _ : state) benchmark::DoNotOptimize(trainer.collect(parallel));
  state.SetItemsProcessed(state.iterations() * c.actors * c.steps_per_actor);
  state.counters["threads"] = parallel ? omp_get_max_threads() : 1;
}

void BM_CollectSerial(benchmark::State& s) { collect(s, false); }
void BM_CollectOpenMP(benchmark::State& s) { collect(s, true); }

const learn::NearestNeighborPolicy& np() {
  static const learn::NearestNeighborPolicy p(learn::extract_pairs(demos(), lifting()));
  return p;
}

std::vector<learn::Obs> queries(std::size_t n) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.1);
  std::vector<learn::Obs> q(n);
  for (auto& o : q) o = learn::Obs::NullaryExpr([&] { return g(rng); });
  return q;
}

void BM_NearestSerial(benchmark::State& state) {
  const auto q = queries(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(np().nearest_batch_serial(q));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_NearestOpenMP(benchmark::State& state) {
  const auto q = queries(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(np().nearest_batch_parallel(q));
  state.SetItemsProcessed(state.iterations() * state.range(0));
  state.counters["threads"] = omp_get_max_threads();
}

}  // namespace

BENCHMARK(BM_CollectSerial)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CollectOpenMP)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NearestSerial)->Arg(256)->Arg(2048)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NearestOpenMP)->Arg(256)->Arg(2048)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
