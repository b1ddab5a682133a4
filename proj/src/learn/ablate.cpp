#include "teleopforge/learn/ablate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <stdexcept>

namespace teleopforge::learn {

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman inputs differ in length");
  if (x.size() < 2) return 0.0;
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

const AblationCell& AblationResult::cell(int count, std::uint64_t seed) const {
  for (const auto& c : cells) {
    if (c.count == count && c.seed == seed) return c;
  }
  throw std::out_of_range("no ablation cell for that count and seed");
}

AblationResult ablate_demo_count(const sim::Simulator& sim, const std::vector<demostore::EpisodeRecord>& demos,
                                 const AblationConfig& config,
                                 const std::function<void(const AblationCell&)>& progress) {
  if (config.counts.empty() || config.seeds.empty()) throw std::invalid_argument("counts and seeds must be non-empty");
  const int largest = *std::max_element(config.counts.begin(), config.counts.end());
  if (*std::min_element(config.counts.begin(), config.counts.end()) < 0) {
    throw std::invalid_argument("demo counts must be >= 0");
  }
  if (static_cast<std::size_t>(largest) > demos.size()) {
    throw std::invalid_argument("ablation needs " + std::to_string(largest) + " demos, dataset has " +
                                std::to_string(demos.size()));
  }
  preflight_demos(std::vector(demos.begin(), demos.begin() + largest), sim);

  AblationResult out;
  out.counts = config.counts;
  out.seeds = config.seeds;
  for (int count : config.counts) {
    std::vector<double> successes;
    for (auto seed : config.seeds) {
      const auto t0 = std::chrono::steady_clock::now();
      PpoConfig pc = config.ppo;
      pc.seed = seed;
      PpoTrainer trainer(sim, pc, std::vector(demos.begin(), demos.begin() + count));
      const auto result = trainer.train(config.budget);
      AblationCell cell;
      cell.count = count;
      cell.seed = seed;
      cell.success_rate = result.eval.success_rate;
      cell.mean_return = result.eval.mean_return;
      cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      out.cells.push_back(cell);
      successes.push_back(cell.success_rate);
      if (progress) progress(cell);
    }
    const double n = static_cast<double>(successes.size());
    const double mean = std::accumulate(successes.begin(), successes.end(), 0.0) / n;
    double var = 0.0;
    for (double s : successes) var += (s - mean) * (s - mean);
    out.mean_success.push_back(mean);
    out.std_success.push_back(successes.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0);
  }
  std::vector<double> xs(config.counts.begin(), config.counts.end());
  out.spearman = spearman(xs, out.mean_success);

  // Inversions are counted along increasing demo count.
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (out.mean_success[order[i]] < out.mean_success[order[i - 1]]) ++out.inversions;
  }

  if (config.baselines && largest > 0) {
    const std::vector train(demos.begin(), demos.begin() + largest);
    const DemoPairs pairs = extract_pairs(train, sim, config.ppo.env);
    BcConfig bc_cfg;
    bc_cfg.seed = config.seeds.front();
    const auto bc = bc_train(pairs, bc_cfg);
    const GaussianPolicy& bp = bc.policy;
    out.bc = evaluate([&bp](const Obs& o) { return bp.mean(o); }, sim, config.ppo.eval_episodes,
                      config.seeds.front(), config.ppo.env);
    const NearestNeighborPolicy np(pairs);
    out.np = evaluate([&np](const Obs& o) { return np.act(o); }, sim, config.ppo.eval_episodes, config.seeds.front(),
                      config.ppo.env);
  }
  return out;
}

void write_ablation_table(std::ostream& out, const AblationResult& r) {
  out << std::left << std::setw(8) << "demos";
  for (auto s : r.seeds) out << std::setw(10) << ("seed " + std::to_string(s));
  out << "mean +- std\n";
  out << std::fixed << std::setprecision(2);
  for (std::size_t i = 0; i < r.counts.size(); ++i) {
    out << std::setw(8) << r.counts[i];
    for (auto s : r.seeds) out << std::setw(10) << r.cell(r.counts[i], s).success_rate;
    out << r.mean_success[i] << " +- " << r.std_success[i] << '\n';
  }
  out << "spearman(count, mean success) = " << std::setprecision(3) << r.spearman << ", inversions = " << r.inversions
      << '\n';
  if (r.bc) out << "BC success " << std::setprecision(2) << r.bc->success_rate << '\n';
  if (r.np) out << "NP success " << std::setprecision(2) << r.np->success_rate << '\n';
  out.unsetf(std::ios::floatfield);
}

void write_ablation_csv(std::ostream& out, const AblationResult& r) {
  out << "count,seed,success_rate,mean_return,seconds\n";
  out << std::setprecision(10);
  for (const auto& c : r.cells) {
    out << c.count << ',' << c.seed << ',' << c.success_rate << ',' << c.mean_return << ',' << c.seconds << '\n';
  }
}

}  // namespace teleopforge::learn
