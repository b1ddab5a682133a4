#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include "common.hpp"
#include "json.hpp"
#include "teleopforge/analytics/stats.hpp"
#include "teleopforge/demostore/demo.hpp"
#include "teleopforge/learn/ablate.hpp"
#include "teleopforge/learn/baselines.hpp"
#include "teleopforge/learn/demonstrator.hpp"
#include "teleopforge/learn/ppo.hpp"
#include "teleopforge/sim/task.hpp"

namespace fs = std::filesystem;

namespace teleopforge::tool {

namespace {

std::vector<std::string> task_names() { return {"lifting", "picking", "assembly"}; }

sim::Simulator task_sim(const std::string& task) {
  return sim::Simulator(sim::default_arm(), sim::builtin_task(sim::parse_task_kind(task)));
}

void print_warnings(const demostore::DatasetIndex& idx) {
  for (const auto& w : idx.warnings) std::cerr << "warning: " << w << '\n';
}

/// Samples from a file, or completion times of successful demos under a directory.
std::vector<double> load_samples(const std::string& source, const std::string& task) {
  if (fs::is_directory(source)) {
    const auto idx = demostore::build_index(source);
    print_warnings(idx);
    std::vector<double> out;
    for (const auto& row : idx.rows) {
      if (row.success && (task.empty() || row.task == task)) out.push_back(row.completion_time);
    }
    return out;
  }
  return analytics::read_samples(source);
}

std::vector<demostore::EpisodeRecord> take_demos(const std::string& dir, const std::string& task, int count) {
  if (count == 0) return {};
  auto demos = learn::load_demos(dir, task);
  if (count > 0) {
    if (static_cast<std::size_t>(count) > demos.size()) {
      throw UsageError("asked for " + std::to_string(count) + " demos, " + dir + " has " +
                       std::to_string(demos.size()) + " successful " + task + " demos");
    }
    demos.resize(static_cast<std::size_t>(count));
  }
  return demos;
}

struct PpoArgs {
  std::string task = "lifting";
  std::string demos;
  int count = 0;
  std::uint64_t budget = 512000;
  std::uint64_t seed = 0;
  std::string out = "runs/ppo";
  int actors = 8;
  int steps_per_actor = 256;
  double demo_reset_prob = 0.9;
  double lr = 1e-3;
  int eval_episodes = 100;
  bool serial = false;
  bool quiet = false;
};

void add_ppo_flags(CLI::App* sub, PpoArgs& a) {
  sub->add_option("--task", a.task, "task")->check(CLI::IsMember(task_names()));
  sub->add_option("--demos", a.demos, "demonstration directory");
  sub->add_option("--budget", a.budget, "environment steps per run")->check(CLI::PositiveNumber);
  sub->add_option("--out", a.out, "output directory");
  sub->add_option("--actors", a.actors, "parallel actors")->check(CLI::PositiveNumber);
  sub->add_option("--steps-per-actor", a.steps_per_actor, "rollout length per actor per update")
      ->check(CLI::PositiveNumber);
  sub->add_option("--demo-reset-prob", a.demo_reset_prob, "probability an episode starts from a demo state")
      ->check(CLI::Range(0.0, 1.0));
  sub->add_option("--lr", a.lr, "policy learning rate")->check(CLI::PositiveNumber);
  sub->add_option("--eval-episodes", a.eval_episodes, "greedy evaluation episodes")->check(CLI::NonNegativeNumber);
  sub->add_flag("--serial", a.serial, "collect rollouts without OpenMP");
  sub->add_flag("-q,--quiet", a.quiet, "no per-iteration progress");
}

learn::PpoConfig ppo_config(const PpoArgs& a) {
  learn::PpoConfig c;
  c.seed = a.seed;
  c.actors = a.actors;
  c.steps_per_actor = a.steps_per_actor;
  c.demo_reset_prob = a.demo_reset_prob;
  c.policy_lr = a.lr;
  c.eval_episodes = a.eval_episodes;
  c.parallel = !a.serial;
  return c;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("expected a comma-separated list of non-negative integers, got '" + s + "'");
    }
  }
  if (out.empty()) throw UsageError("empty list");
  return out;
}

}  // namespace

void add_data_commands(CLI::App& app, std::vector<Command>& commands, RunInfo& info) {
  // demostore
  auto* ds = app.add_subcommand("demostore", "inspect and replay stored demonstrations");
  ds->require_subcommand(1);
  {
    auto dir = std::make_shared<std::string>();
    auto csv = std::make_shared<bool>(false);
    auto* sub = ds->add_subcommand("index", "list demos under a directory with aggregates");
    sub->add_option("dir", *dir, "demonstration directory")->required()->envname("TELEOPFORGE_STORAGE");
    sub->add_flag("--csv", *csv, "CSV rows instead of a table");
    commands.push_back({sub, [dir, csv] {
                          const auto idx = demostore::build_index(*dir);
                          print_warnings(idx);
                          if (*csv) {
                            std::cout << "path,task,user,condition,success,completion_time,ticks\n";
                            for (const auto& r : idx.rows) {
                              std::cout << r.path << ',' << r.task << ',' << r.user << ',' << r.condition << ','
                                        << (r.success ? 1 : 0) << ',' << r.completion_time << ',' << r.ticks << '\n';
                            }
                          } else {
                            for (const auto& r : idx.rows) {
                              std::cout << std::left << std::setw(10) << r.task << std::setw(14) << r.user
                                        << std::setw(14) << r.condition << (r.success ? "ok   " : "fail ")
                                        << std::right << std::setw(9) << std::fixed << std::setprecision(2)
                                        << r.completion_time << " s  " << r.path << '\n';
                            }
                            std::cout << idx.totals.count << " demos, " << idx.totals.successful
                                      << " successful, mean completion " << std::setprecision(3)
                                      << idx.totals.mean_completion_time << " s\n";
                          }
                          return kOk;
                        }, nullptr});
  }
  {
    auto files = std::make_shared<std::vector<std::string>>();
    auto* sub = ds->add_subcommand("replay", "re-simulate demos and check they reach the recorded outcome");
    sub->add_option("files", *files, "demo files")->required();
    commands.push_back({sub, [files] {
                          int bad = 0;
                          for (const auto& f : *files) {
                            const auto rec = demostore::read_demo(f);
                            const auto s = task_sim(rec.header.task);
                            const auto rep = demostore::replay(rec, s);
                            const bool ok = rep.max_deviation <= 1e-9 && rep.success == rec.header.success;
                            bad += ok ? 0 : 1;
                            std::cout << (ok ? "ok   " : "FAIL ") << f << "  steps " << rep.steps
                                      << "  max deviation " << rep.max_deviation << "  success " << rep.success
                                      << '\n';
                          }
                          return bad ? kFailed : kOk;
                        }, nullptr});
  }

  // stats
  auto* st = app.add_subcommand("stats", "completion-time statistics");
  st->require_subcommand(1);
  {
    auto a = std::make_shared<std::string>(), b = std::make_shared<std::string>(),
         task = std::make_shared<std::string>();
    auto* sub = st->add_subcommand("ks", "two-sample Kolmogorov-Smirnov test");
    sub->add_option("--a", *a, "first sample: numbers file or demo directory")->required();
    sub->add_option("--b", *b, "second sample: numbers file or demo directory")->required();
    sub->add_option("--task", *task, "restrict demo directories to a task");
    commands.push_back({sub, [a, b, task] {
                          const auto x = load_samples(*a, *task), y = load_samples(*b, *task);
                          if (x.empty() || y.empty()) throw UsageError("both samples must be non-empty");
                          const auto r = analytics::ks_two_sample(x, y);
                          std::cout << "n1 = " << r.n1 << ", n2 = " << r.n2 << ", D = " << r.D
                                    << ", p = " << r.p << '\n';
                          return kOk;
                        }, nullptr});
  }
  {
    auto dir = std::make_shared<std::string>();
    auto by = std::make_shared<std::string>("condition");
    auto csv = std::make_shared<bool>(false);
    auto* sub = st->add_subcommand("summary", "mean and std of completion time per group (successful demos)");
    sub->add_option("dir", *dir, "demonstration directory")->required();
    sub->add_option("--by", *by, "grouping key")->check(CLI::IsMember({"task", "user", "condition"}));
    sub->add_flag("--csv", *csv, "CSV instead of a table");
    commands.push_back({sub, [dir, by, csv] {
                          const auto idx = demostore::build_index(*dir);
                          print_warnings(idx);
                          const auto key = analytics::parse_group_key(*by);
                          const auto rows = analytics::summarize(idx.rows, key);
                          if (*csv) {
                            analytics::write_summary_csv(std::cout, rows, key);
                          } else {
                            analytics::write_summary_table(std::cout, rows, key);
                          }
                          return kOk;
                        }, nullptr});
  }
  {
    auto src = std::make_shared<std::string>(), task = std::make_shared<std::string>();
    auto bins = std::make_shared<std::size_t>(10);
    auto* sub = st->add_subcommand("hist", "equal-width histogram as CSV");
    sub->add_option("source", *src, "sample file or demo directory")->required();
    sub->add_option("--bins", *bins, "number of bins")->check(CLI::PositiveNumber);
    sub->add_option("--task", *task, "restrict a demo directory to a task");
    sub->add_flag("--csv", "CSV output (the only format)");
    commands.push_back({sub, [src, task, bins] {
                          const auto v = load_samples(*src, *task);
                          if (v.empty()) throw UsageError("no samples");
                          analytics::write_histogram_csv(std::cout, analytics::histogram(v, *bins));
                          return kOk;
                        }, nullptr});
  }
  {
    auto file = std::make_shared<std::string>();
    auto* sub = st->add_subcommand("stages", "per-object grasp and placement timings of one demo");
    sub->add_option("file", *file, "demo file")->required();
    commands.push_back({sub, [file] {
                          const auto rec = demostore::read_demo(*file);
                          const auto t = analytics::stage_timings(rec);
                          std::cout << "object,attach_time,time_to_grasp,time_grasp_to_place\n";
                          for (const auto& o : t.objects) {
                            std::cout << o.object_id << ',' << o.attach_time << ',' << o.time_to_grasp << ',';
                            if (o.time_grasp_to_place) std::cout << *o.time_grasp_to_place;
                            std::cout << '\n';
                          }
                          return kOk;
                        }, nullptr});
  }

  // train
  auto* tr = app.add_subcommand("train", "scripted demos, demo-reset PPO, baselines and the demo-count ablation");
  tr->require_subcommand(1);
  {
    struct DemoArgs {
      std::string task = "lifting";
      int count = 100;
      double noise = 0.01;
      std::uint64_t seed = 0;
      std::string out = "demos/scripted";
      bool compress = false;
    };
    auto a = std::make_shared<DemoArgs>();
    auto* sub = tr->add_subcommand("demos", "generate scripted demonstrations");
    sub->add_option("--task", a->task, "task")->check(CLI::IsMember(task_names()));
    sub->add_option("--count", a->count, "number of demos")->check(CLI::PositiveNumber);
    sub->add_option("--noise", a->noise, "waypoint jitter std, m")->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", a->seed, "first seed; demo i uses seed + i");
    sub->add_option("--out", a->out, "output directory");
    sub->add_flag("--compress", a->compress, "gzip the files");
    commands.push_back({sub, [a, &info] {
                          info.seed = a->seed;
                          info.output_dir = a->out;
                          const auto s = task_sim(a->task);
                          fs::create_directories(a->out);
                          int ok = 0;
                          for (int i = 0; i < a->count; ++i) {
                            learn::DemonstratorOptions o;
                            o.noise = a->noise;
                            o.seed = a->seed + static_cast<std::uint64_t>(i);
                            const auto rec = learn::scripted_demonstrator(s, o);
                            std::ostringstream name;
                            name << a->task << "-scripted-" << std::setw(6) << std::setfill('0') << o.seed
                                 << ".djsonl" << (a->compress ? ".gz" : "");
                            demostore::write_demo_file(rec, fs::path(a->out) / name.str());
                            ok += rec.header.success ? 1 : 0;
                          }
                          std::cout << ok << " of " << a->count << " demos successful, written to " << a->out
                                    << '\n';
                          return ok > 0 ? kOk : kFailed;
                        }, &info});
  }
  {
    auto a = std::make_shared<PpoArgs>();
    auto* sub = tr->add_subcommand("ppo", "train one demo-reset PPO policy");
    add_ppo_flags(sub, *a);
    sub->add_option("--count", a->count, "use the first N demos (-1: all)");
    sub->add_option("--seed", a->seed, "seed");
    commands.push_back({sub, [a, &info] {
                          info.seed = a->seed;
                          info.output_dir = a->out;
                          if (a->count != 0 && a->demos.empty()) throw UsageError("--count needs --demos");
                          const auto s = task_sim(a->task);
                          auto demos = a->count == 0 ? std::vector<demostore::EpisodeRecord>{}
                                                     : take_demos(a->demos, a->task, a->count);
                          learn::preflight_demos(demos, s);
                          fs::create_directories(a->out);
                          std::ofstream curve(fs::path(a->out) / "curve.csv");
                          curve << "iteration,env_steps,mean_return,success_fraction,demo_reset_fraction,"
                                   "policy_loss,value_loss,approx_kl,log_std_mean\n";
                          learn::PpoTrainer trainer(s, ppo_config(*a), std::move(demos));
                          const auto res = trainer.train(a->budget, [&](const learn::IterationStats& it) {
                            curve << it.iteration << ',' << it.env_steps << ',' << it.mean_return << ','
                                  << it.success_fraction << ',' << it.demo_reset_fraction << ',' << it.policy_loss
                                  << ',' << it.value_loss << ',' << it.approx_kl << ',' << it.log_std_mean << '\n';
                            if (!a->quiet && it.iteration % 10 == 0) {
                              log_line("iter " + std::to_string(it.iteration) + " steps " +
                                       std::to_string(it.env_steps) + " return " + std::to_string(it.mean_return) +
                                       " success " + std::to_string(it.success_fraction));
                            }
                          });
                          learn::save_policy((fs::path(a->out) / "policy.json").string(), res.policy, a->task,
                                             "ppo");
                          nlohmann::ordered_json j;
                          j["task"] = a->task;
                          j["demos"] = a->count;
                          j["seed"] = a->seed;
                          j["env_steps"] = res.env_steps;
                          j["eval_episodes"] = res.eval.episodes;
                          j["success_rate"] = res.eval.success_rate;
                          j["mean_return"] = res.eval.mean_return;
                          std::ofstream(fs::path(a->out) / "eval.json") << j.dump(2) << '\n';
                          std::cout << j.dump(2) << std::endl;
                          return kOk;
                        }, &info});
  }
  {
    auto a = std::make_shared<PpoArgs>();
    auto counts = std::make_shared<std::string>("0,1,10,100");
    auto seeds = std::make_shared<std::string>("0,1,2");
    auto* sub = tr->add_subcommand("ablate", "PPO success rate against the number of demos");
    add_ppo_flags(sub, *a);
    sub->add_option("--counts", *counts, "demo counts, comma separated");
    sub->add_option("--seeds", *seeds, "seeds, comma separated");
    a->out = "runs/ablate";
    commands.push_back({sub, [a, counts, seeds, &info] {
                          info.output_dir = a->out;
                          learn::AblationConfig c;
                          c.counts = parse_int_list(*counts);
                          c.seeds.clear();
                          for (int s : parse_int_list(*seeds)) c.seeds.push_back(static_cast<std::uint64_t>(s));
                          info.seed = c.seeds.front();
                          c.budget = a->budget;
                          c.ppo = ppo_config(*a);
                          const int largest = *std::max_element(c.counts.begin(), c.counts.end());
                          if (largest > 0 && a->demos.empty()) throw UsageError("--demos is required");
                          const auto demos = take_demos(a->demos, a->task, largest);
                          const auto s = task_sim(a->task);
                          const auto r = learn::ablate_demo_count(s, demos, c, [&](const learn::AblationCell& cell) {
                            if (!a->quiet) {
                              log_line("demos " + std::to_string(cell.count) + " seed " + std::to_string(cell.seed) +
                                       ": success " + std::to_string(cell.success_rate) + " (" +
                                       std::to_string(static_cast<int>(cell.seconds)) + " s)");
                            }
                          });
                          fs::create_directories(a->out);
                          std::ofstream csv(fs::path(a->out) / "ablation.csv");
                          learn::write_ablation_csv(csv, r);
                          std::ostringstream table;
                          learn::write_ablation_table(table, r);
                          std::ofstream(fs::path(a->out) / "ablation.txt") << table.str();
                          std::cout << table.str();
                          return kOk;
                        }, &info});
  }
  {
    struct BaselineArgs {
      std::string task = "lifting";
      std::string demos;
      int count = -1;
      std::uint64_t seed = 0;
      int epochs = 50;
      int eval_episodes = 100;
      std::string out = "runs/baselines";
    };
    auto a = std::make_shared<BaselineArgs>();
    auto* sub = tr->add_subcommand("baselines", "behavior cloning and nearest-neighbor policies from demos");
    sub->add_option("--task", a->task, "task")->check(CLI::IsMember(task_names()));
    sub->add_option("--demos", a->demos, "demonstration directory")->required();
    sub->add_option("--count", a->count, "use the first N demos (-1: all)");
    sub->add_option("--seed", a->seed, "seed for training and evaluation");
    sub->add_option("--epochs", a->epochs, "behavior cloning epochs")->check(CLI::PositiveNumber);
    sub->add_option("--eval-episodes", a->eval_episodes, "evaluation episodes")->check(CLI::PositiveNumber);
    sub->add_option("--out", a->out, "output directory");
    commands.push_back({sub, [a, &info] {
                          info.seed = a->seed;
                          info.output_dir = a->out;
                          if (a->count == 0) throw UsageError("baselines need at least one demo");
                          const auto s = task_sim(a->task);
                          const auto pairs = learn::extract_pairs(take_demos(a->demos, a->task, a->count), s);
                          learn::BcConfig bc_cfg;
                          bc_cfg.seed = a->seed;
                          bc_cfg.epochs = a->epochs;
                          const auto bc = learn::bc_train(pairs, bc_cfg);
                          const learn::NearestNeighborPolicy np(pairs);
                          const auto& bp = bc.policy;
                          const auto bc_eval = learn::evaluate([&](const learn::Obs& o) { return bp.mean(o); }, s,
                                                               a->eval_episodes, a->seed);
                          const auto np_eval = learn::evaluate([&](const learn::Obs& o) { return np.act(o); }, s,
                                                               a->eval_episodes, a->seed);
                          fs::create_directories(a->out);
                          learn::save_policy((fs::path(a->out) / "bc_policy.json").string(), bp, a->task, "bc");
                          nlohmann::ordered_json j;
                          j["pairs"] = pairs.size();
                          j["bc_final_loss"] = bc.epoch_loss.empty() ? 0.0 : bc.epoch_loss.back();
                          j["bc_success_rate"] = bc_eval.success_rate;
                          j["np_success_rate"] = np_eval.success_rate;
                          std::ofstream(fs::path(a->out) / "baselines.json") << j.dump(2) << '\n';
                          std::cout << j.dump(2) << std::endl;
                          return kOk;
                        }, &info});
  }
  {
    auto policy = std::make_shared<std::string>();
    auto episodes = std::make_shared<int>(100);
    auto seed = std::make_shared<std::uint64_t>(0);
    auto* sub = tr->add_subcommand("eval", "greedy success rate of a saved policy from default resets");
    sub->add_option("policy", *policy, "policy JSON file")->required();
    sub->add_option("--episodes", *episodes, "episodes")->check(CLI::PositiveNumber);
    sub->add_option("--seed", *seed, "seed");
    commands.push_back({sub, [policy, episodes, seed, &info] {
                          info.seed = *seed;
                          const auto loaded = learn::load_policy(*policy);
                          const auto s = task_sim(loaded.task);
                          const auto& p = loaded.policy;
                          const auto r =
                              learn::evaluate([&](const learn::Obs& o) { return p.mean(o); }, s, *episodes, *seed);
                          std::cout << "success_rate " << r.success_rate << "  mean_return " << r.mean_return
                                    << '\n';
                          return kOk;
                        }, &info});
  }
}

}  // namespace teleopforge::tool
