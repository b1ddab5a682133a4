#include "teleopforge/learn/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace teleopforge::learn {

void PpoConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be positive");
  };
  if (demo_reset_prob < 0.0 || demo_reset_prob > 1.0) throw std::invalid_argument("demo_reset_prob outside [0, 1]");
  if (gamma <= 0.0 || gamma > 1.0) throw std::invalid_argument("gamma outside (0, 1]");
  if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("lambda outside [0, 1]");
  positive(clip, "clip");
  positive(policy_lr, "policy_lr");
  positive(value_lr, "value_lr");
  positive(actors, "actors");
  positive(steps_per_actor, "steps_per_actor");
  positive(epochs, "epochs");
  positive(minibatch, "minibatch");
  positive(hidden, "hidden");
  if (eval_episodes < 0) throw std::invalid_argument("eval_episodes must be >= 0");
}

std::vector<double> gae(const std::vector<double>& rewards, const std::vector<double>& values,
                        const std::vector<double>& next_values, const std::vector<std::uint8_t>& segment_end,
                        double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || next_values.size() != n || segment_end.size() != n) {
    throw std::invalid_argument("gae inputs differ in length");
  }
  std::vector<double> adv(n);
  double carry = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    if (segment_end[t]) carry = 0.0;
    const double delta = rewards[t] + gamma * next_values[t] - values[t];
    carry = delta + gamma * lambda * carry;
    adv[t] = carry;
  }
  return adv;
}

PolicyLoss ppo_policy_loss(const GaussianPolicy& policy, const PolicyBatch& batch, double clip,
                           double entropy_coef, bool with_grad) {
  const auto b = batch.features.cols();
  if (b == 0) throw std::invalid_argument("empty policy batch");
  Mlp::Tape tape;
  const Eigen::MatrixXd mu = policy.net.forward(batch.features, tape);
  const Eigen::VectorXd lp = log_prob(mu, policy.log_std, batch.actions);
  const double d = static_cast<double>(kActDim);
  const double entropy = policy.log_std.sum() + 0.5 * d * (1.0 + std::log(2.0 * std::numbers::pi));

  PolicyLoss out;
  Eigen::VectorXd d_lp(b);
  double objective = 0.0;
  int clipped = 0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const double r = std::exp(lp[i] - batch.old_log_prob[i]);
    const double a = batch.advantages[i];
    const double unclipped = r * a;
    const double clipped_obj = std::clamp(r, 1.0 - clip, 1.0 + clip) * a;
    objective += std::min(unclipped, clipped_obj);
    // Where the clipped branch is the smaller one its slope in r is zero.
    d_lp[i] = unclipped <= clipped_obj ? -unclipped / static_cast<double>(b) : 0.0;
    if (std::abs(r - 1.0) > clip) ++clipped;
    out.approx_kl += batch.old_log_prob[i] - lp[i];
  }
  out.loss = -objective / static_cast<double>(b) - entropy_coef * entropy;
  out.clip_fraction = static_cast<double>(clipped) / static_cast<double>(b);
  out.approx_kl /= static_cast<double>(b);
  if (!with_grad) return out;

  const Eigen::ArrayXd inv_var = (-2.0 * policy.log_std.array()).exp();
  const Eigen::ArrayXXd diff = (batch.actions - mu).array();
  Eigen::MatrixXd d_mu = (diff.colwise() * inv_var).rowwise() * d_lp.array().transpose();
  const Eigen::ArrayXXd z2 = diff.square().colwise() * inv_var;
  const Eigen::VectorXd d_log_std =
      ((z2 - 1.0).rowwise() * d_lp.array().transpose()).rowwise().sum().matrix() -
      Eigen::VectorXd::Constant(kActDim, entropy_coef);

  const Eigen::VectorXd g_net = policy.net.backward(tape, d_mu);
  out.grad.resize(g_net.size() + kActDim);
  out.grad << g_net, d_log_std;
  return out;
}

std::pair<double, Eigen::VectorXd> value_loss(const Mlp& value, const Eigen::MatrixXd& features,
                                              const Eigen::VectorXd& targets) {
  Mlp::Tape tape;
  const Eigen::MatrixXd v = value.forward(features, tape);
  const Eigen::RowVectorXd err = v.row(0) - targets.transpose();
  const double n = static_cast<double>(targets.size());
  const double loss = 0.5 * err.squaredNorm() / n;
  return {loss, value.backward(tape, err / n)};
}

EvalResult evaluate(const PolicyFn& policy, const sim::Simulator& sim, int episodes, std::uint64_t seed,
                    const EnvOptions& env_options) {
  EvalResult out;
  out.episodes = episodes;
  if (episodes <= 0) return out;
  std::vector<double> returns(static_cast<std::size_t>(episodes), 0.0);
  std::vector<int> success(static_cast<std::size_t>(episodes), 0);
  for (int e = 0; e < episodes; ++e) {
    std::seed_seq seq{seed, static_cast<std::uint64_t>(e), std::uint64_t{0xe7a1}};
    std::mt19937_64 rng(seq);
    Env env(sim, env_options);
    Obs obs = env.reset(sim.reset(rng));
    double ret = 0.0;
    for (;;) {
      const auto o = env.step(policy(obs));
      ret += o.reward;
      obs = o.obs;
      if (o.done) break;
    }
    returns[static_cast<std::size_t>(e)] = ret;
    success[static_cast<std::size_t>(e)] = env.ever_succeeded() ? 1 : 0;
  }
  out.mean_return = std::accumulate(returns.begin(), returns.end(), 0.0) / episodes;
  out.success_rate = static_cast<double>(std::accumulate(success.begin(), success.end(), 0)) / episodes;
  return out;
}

void preflight_demos(const std::vector<demostore::EpisodeRecord>& demos, const sim::Simulator& sim) {
  for (std::size_t i = 0; i < demos.size(); ++i) {
    const auto report = demostore::replay(demos[i], sim);
    if (report.max_deviation > 1e-9 || !report.success) {
      std::ostringstream msg;
      msg << "demo " << i << " does not replay (deviation " << report.max_deviation << ", success "
          << report.success << ")";
      throw std::runtime_error(msg.str());
    }
  }
}

struct PpoTrainer::Actor {
  Actor(const sim::Simulator& s, const EnvOptions& options, std::uint64_t seed, std::uint64_t index)
      : sim(s), env(sim, options) {
    std::seed_seq seq{seed, index, std::uint64_t{0xac7}};
    rng.seed(seq);
  }

  sim::Simulator sim;
  Env env;
  std::mt19937_64 rng;
  double episode_return = 0.0;
};

namespace {

struct ActorSegment {
  Eigen::MatrixXd features, actions;
  std::vector<double> log_prob, rewards, values, next_values;
  std::vector<std::uint8_t> segment_end;
  std::vector<double> episode_returns;
  std::vector<std::uint8_t> episode_success;
  std::size_t resets = 0, demo_resets = 0;
};

}  // namespace

PpoTrainer::PpoTrainer(const sim::Simulator& sim, PpoConfig config, std::vector<demostore::EpisodeRecord> demos)
    : sim_(sim), config_(config), policy_opt_(config.policy_lr), value_opt_(config.value_lr), rng_(config.seed) {
  config_.validate();
  if (!demos.empty()) sampler_ = std::make_unique<demostore::ResetSampler>(std::move(demos));
  policy_ = GaussianPolicy::create(config_.hidden, config_.init_log_std, rng_);
  value_ = Mlp({kObsDim, config_.hidden, config_.hidden, 1}, rng_, 1.0);
  for (int i = 0; i < config_.actors; ++i) {
    auto a = std::make_unique<Actor>(sim, config_.env, config_.seed, static_cast<std::uint64_t>(i));
    a->env.reset(reset_env(a->sim, sampler_.get(), config_.demo_reset_prob, a->rng).state);
    actors_.push_back(std::move(a));
  }
}

PpoTrainer::~PpoTrainer() = default;

Rollout PpoTrainer::collect(bool parallel) {
  const int n_actors = config_.actors;
  const int steps = config_.steps_per_actor;
  std::vector<ActorSegment> segments(static_cast<std::size_t>(n_actors));

  auto run_actor = [&](int i) {
    Actor& actor = *actors_[static_cast<std::size_t>(i)];
    ActorSegment& seg = segments[static_cast<std::size_t>(i)];
    seg.features.resize(kObsDim, steps);
    seg.actions.resize(kActDim, steps);
    Obs obs = actor.env.observation();
    for (int t = 0; t < steps; ++t) {
      const Eigen::VectorXd f = features(obs);
      double lp = 0.0;
      const Action a = policy_.sample(obs, actor.rng, &lp);
      const double v = value_.forward(f)[0];
      const StepOutcome out = actor.env.step(a);
      actor.episode_return += out.reward;
      seg.features.col(t) = f;
      seg.actions.col(t) = a;
      seg.log_prob.push_back(lp);
      seg.rewards.push_back(out.reward);
      seg.values.push_back(v);
      seg.next_values.push_back(value_.forward(features(out.obs))[0]);
      seg.segment_end.push_back(out.done || t + 1 == steps ? 1 : 0);
      obs = out.obs;
      if (out.done) {
        seg.episode_returns.push_back(actor.episode_return);
        seg.episode_success.push_back(actor.env.ever_succeeded() ? 1 : 0);
        actor.episode_return = 0.0;
        const auto r = reset_env(actor.sim, sampler_.get(), config_.demo_reset_prob, actor.rng);
        ++seg.resets;
        if (r.from_demo) ++seg.demo_resets;
        obs = actor.env.reset(r.state);
      }
    }
  };

  if (parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n_actors; ++i) run_actor(i);
  } else {
    for (int i = 0; i < n_actors; ++i) run_actor(i);
  }

  Rollout r;
  const Eigen::Index total = static_cast<Eigen::Index>(n_actors) * steps;
  r.features.resize(kObsDim, total);
  r.actions.resize(kActDim, total);
  for (int i = 0; i < n_actors; ++i) {
    auto& seg = segments[static_cast<std::size_t>(i)];
    r.features.middleCols(static_cast<Eigen::Index>(i) * steps, steps) = seg.features;
    r.actions.middleCols(static_cast<Eigen::Index>(i) * steps, steps) = seg.actions;
    auto append = [](auto& dst, const auto& src) { dst.insert(dst.end(), src.begin(), src.end()); };
    append(r.log_prob, seg.log_prob);
    append(r.rewards, seg.rewards);
    append(r.values, seg.values);
    append(r.next_values, seg.next_values);
    append(r.segment_end, seg.segment_end);
    append(r.episode_returns, seg.episode_returns);
    append(r.episode_success, seg.episode_success);
    r.resets += seg.resets;
    r.demo_resets += seg.demo_resets;
  }
  env_steps_ += static_cast<std::uint64_t>(total);
  return r;
}

IterationStats PpoTrainer::update(const Rollout& rollout) {
  const std::size_t n = rollout.size();
  std::vector<double> adv = gae(rollout.rewards, rollout.values, rollout.next_values, rollout.segment_end,
                                config_.gamma, config_.lambda);
  Eigen::VectorXd targets(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) targets[static_cast<Eigen::Index>(i)] = adv[i] + rollout.values[i];
  Eigen::Map<Eigen::VectorXd> a(adv.data(), static_cast<Eigen::Index>(n));
  const double mean = a.mean();
  const double sd = std::sqrt((a.array() - mean).square().mean());
  a = (a.array() - mean) / (sd + 1e-8);

  IterationStats s;
  s.iteration = ++iteration_;
  s.env_steps = env_steps_;
  const auto& er = rollout.episode_returns;
  s.mean_return = er.empty() ? std::numeric_limits<double>::quiet_NaN()
                             : std::accumulate(er.begin(), er.end(), 0.0) / static_cast<double>(er.size());
  const auto& es = rollout.episode_success;
  s.success_fraction =
      es.empty() ? 0.0 : static_cast<double>(std::count(es.begin(), es.end(), 1)) / static_cast<double>(es.size());
  s.demo_reset_fraction =
      rollout.resets ? static_cast<double>(rollout.demo_resets) / static_cast<double>(rollout.resets) : 0.0;

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto mb = static_cast<std::size_t>(config_.minibatch);
  int batches = 0;
  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng_);
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t len = std::min(mb, n - start);
      PolicyBatch batch;
      batch.features.resize(kObsDim, static_cast<Eigen::Index>(len));
      batch.actions.resize(kActDim, static_cast<Eigen::Index>(len));
      batch.old_log_prob.resize(static_cast<Eigen::Index>(len));
      batch.advantages.resize(static_cast<Eigen::Index>(len));
      Eigen::VectorXd vt(static_cast<Eigen::Index>(len));
      for (std::size_t k = 0; k < len; ++k) {
        const auto idx = order[start + k];
        const auto col = static_cast<Eigen::Index>(k);
        batch.features.col(col) = rollout.features.col(idx);
        batch.actions.col(col) = rollout.actions.col(idx);
        batch.old_log_prob[col] = rollout.log_prob[static_cast<std::size_t>(idx)];
        batch.advantages[col] = a[idx];
        vt[col] = targets[idx];
      }
      auto pl = ppo_policy_loss(policy_, batch, config_.clip, config_.entropy_coef);
      auto [vl, vg] = value_loss(value_, batch.features, vt);
      if (!std::isfinite(pl.loss) || !std::isfinite(vl) || !pl.grad.allFinite() || !vg.allFinite()) {
        std::ostringstream msg;
        msg << "PPO diverged at iteration " << iteration_ << " epoch " << epoch << ": policy loss " << pl.loss
            << ", value loss " << vl << ", log_std [" << policy_.log_std.transpose() << "]";
        throw TrainingDiverged(msg.str());
      }
      clip_grad_norm(pl.grad, config_.max_grad_norm);
      clip_grad_norm(vg, config_.max_grad_norm);
      Eigen::VectorXd flat = policy_.flat();
      policy_opt_.step(flat, pl.grad);
      policy_.set_flat(flat);
      value_opt_.step(value_.params(), vg);
      s.policy_loss += pl.loss;
      s.value_loss += vl;
      s.approx_kl += pl.approx_kl;
      ++batches;
    }
  }
  if (batches) {
    s.policy_loss /= batches;
    s.value_loss /= batches;
    s.approx_kl /= batches;
  }
  s.log_std_mean = policy_.log_std.mean();
  return s;
}

TrainResult PpoTrainer::train(std::uint64_t budget, const std::function<void(const IterationStats&)>& progress) {
  const auto per_iter = static_cast<std::uint64_t>(config_.actors) * static_cast<std::uint64_t>(config_.steps_per_actor);
  const std::uint64_t iterations = std::max<std::uint64_t>(1, (budget + per_iter - 1) / per_iter);
  TrainResult out;
  for (std::uint64_t it = 0; it < iterations; ++it) {
    const Rollout r = collect(config_.parallel);
    out.curve.push_back(update(r));
    if (progress) progress(out.curve.back());
  }
  out.policy = policy_;
  out.value = value_;
  out.env_steps = env_steps_;
  const GaussianPolicy& p = policy_;
  out.eval = evaluate([&p](const Obs& o) { return p.mean(o); }, sim_, config_.eval_episodes,
                      config_.seed ^ 0x9e3779b97f4a7c15ull, config_.env);
  return out;
}

}  // namespace teleopforge::learn
