#pragma once

// The attack loop: an environment wrapping the federation and the capture
// channel, and the PPO trainer that drives it episode by episode.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "hammersim/adversary.hpp"
#include "hammersim/channel.hpp"
#include "hammersim/common.hpp"
#include "hammersim/config.hpp"
#include "hammersim/fl.hpp"
#include "hammersim/metrics.hpp"
#include "hammersim/policy.hpp"

namespace hammersim {

struct StepResult {
  Observation obs;
  RewardBreakdown reward;
  RoundRecord record;
};

/// One attacker against one federation. The attacker perturbs the shared
/// capture environment, so a single perturbation reaches every client.
class AttackEnv {
 public:
  AttackEnv(const FederationConfig& fed, const AgentConfig& agent, std::uint64_t seed)
      : agent_(agent), pristine_(init_federation(fed, derive_seed(seed, "federation"))), fed_(pristine_), seed_(seed) {
    agent_.reward.validate();
    const auto [rows, cols] = fed.raw_shape();
    decoder_ = DecoderConfig{fed.modality, agent.latent_dim, rows, cols};
    const auto x = pristine_.clean_sample(0, 0);
    x_clean_.assign(x.begin(), x.end());
    features_ = pooled_magnitude(x_clean_, agent.obs_bins);
    window_ = {0, total_params()};
  }

  std::size_t total_params() const { return pristine_.spec.total_params(); }
  std::size_t action_dim() const { return agent_.latent_dim; }
  std::size_t obs_dim() const { return features_.size() + total_params(); }
  const FederationState& federation() const { return fed_; }
  const std::vector<RoundRecord>& history() const { return history_; }
  const AgentConfig& agent() const { return agent_; }

  void set_window(const TargetWindow& w) {
    if (w.i >= w.j || w.j > total_params()) throw InvalidArgument("target window must satisfy 0 <= i < j <= M");
    window_ = w;
  }
  const TargetWindow& window() const { return window_; }

  /// Fresh federation and noise stream for `episode`, then one clean round
  /// so the first observation carries U_0.
  Observation reset(std::uint64_t episode) {
    fed_ = pristine_;
    fed_.noise_seed = derive_seed(derive_seed(seed_, "noise"), episode);
    history_.clear();
    auto r = run_round(fed_, {});
    history_.push_back(r.record);
    return build_observation(features_, history_.back(), total_params());
  }

  Perturbation perturbation(std::span<const double> z) const {
    LatentAction a{std::vector<double>(z.begin(), z.end()), decoder_.modality};
    return clip_linf(decode_latent(a, decoder_), agent_.reward.epsilon);
  }

  StepResult step(std::span<const double> z) {
    require(!history_.empty(), "reset the environment before stepping");
    const Perturbation delta = perturbation(z);
    auto r = run_round(fed_, std::span<const Perturbation>(&delta, 1));
    StepResult out;
    out.reward = compute_reward(history_.back().indices, r.record.indices, window_, delta, x_clean_, agent_.reward,
                                decoder_.modality, total_params());
    history_.push_back(r.record);
    out.record = std::move(r.record);
    out.obs = build_observation(features_, history_.back(), total_params());
    return out;
  }

 private:
  AgentConfig agent_;
  FederationState pristine_;
  FederationState fed_;
  std::uint64_t seed_;
  DecoderConfig decoder_;
  std::vector<double> x_clean_;
  std::vector<double> features_;
  TargetWindow window_;
  std::vector<RoundRecord> history_;
};

struct IterationLog {
  std::size_t iteration = 0;
  double mean_reward = 0.0;
  double rur = 0.0;          // this episode's rounds
  double rur_so_far = 0.0;   // every round since the first iteration
  double stability = 0.0;
  double focus = 0.0;
  double stealth = 0.0;
  double mean_abs_delta = 0.0;
};

struct TrainResult {
  TargetWindow window;
  std::vector<IterationLog> log;
  std::vector<RoundRecord> records;  // every round of every episode, in order
  PolicyParams policy;
};

struct TrainOptions {
  bool random_baseline = false;
  std::function<void(const IterationLog&)> on_iteration;
};

namespace detail {

inline double mean_abs(const Perturbation& p) {
  double s = 0.0;
  for (double v : p.delta) s += std::abs(v);
  return p.delta.empty() ? 0.0 : s / static_cast<double>(p.delta.size());
}

}  // namespace detail

/// Warmup with the initial policy picks the target window; each iteration is
/// then one episode followed by one PPO update (no update in baseline mode,
/// where z is uniform in the budget box).
inline TrainResult train_agent(const ExperimentConfig& cfg, const TrainOptions& opts = {}) {
  cfg.validate();
  AttackEnv env(cfg.federation, cfg.agent, cfg.seed);
  TrainResult res;
  res.policy = make_policy(env.obs_dim(), env.action_dim(), cfg.train.policy, derive_seed(cfg.seed, "agent"));
  auto opt = PpoOptimizer::for_params(res.policy, cfg.train.ppo);
  Rng act_rng(derive_seed(cfg.seed, "actions"));
  Rng ppo_rng(derive_seed(cfg.seed, "ppo"));
  const double eps = cfg.agent.reward.epsilon;

  auto choose = [&](const Observation& obs, PolicyOutput& out) {
    out = policy_forward(obs, res.policy);
    if (opts.random_baseline) {
      std::vector<double> z(env.action_dim());
      for (double& v : z) v = act_rng.uniform(-eps, eps);
      return z;
    }
    return sample_action(out, act_rng);
  };

  {
    const std::size_t M = env.total_params();
    const std::size_t len = cfg.agent.window_len ? cfg.agent.window_len : default_window_len(M);
    Observation obs = env.reset(UINT64_MAX);
    PolicyOutput out;
    for (std::size_t r = 1; r < cfg.agent.warmup_rounds; ++r) obs = env.step(choose(obs, out)).obs;
    res.window = select_target_window(env.history(), len, cfg.agent.warmup_rounds, M);
    env.set_window(res.window);
  }

  std::vector<RoundRecord> all;
  std::uint64_t shared_total = 0, size_total = 0;
  for (std::size_t it = 0; it < cfg.train.iterations; ++it) {
    Observation obs = env.reset(it);
    std::vector<Transition> traj;
    traj.reserve(cfg.federation.rounds_per_episode);
    IterationLog log;
    log.iteration = it;
    for (std::size_t r = 0; r < cfg.federation.rounds_per_episode; ++r) {
      PolicyOutput out;
      auto z = choose(obs, out);
      Transition t;
      t.obs = obs;
      t.log_prob = gaussian_log_prob(z, out.mean, out.log_std);
      t.value = out.value;
      log.mean_abs_delta += detail::mean_abs(env.perturbation(z));
      auto s = env.step(z);
      t.action = std::move(z);
      t.reward = s.reward.total;
      log.mean_reward += s.reward.total;
      log.stability += s.reward.stability;
      log.focus += s.reward.focus;
      log.stealth += s.reward.stealth_penalty;
      traj.push_back(std::move(t));
      obs = std::move(s.obs);
    }
    const double n = static_cast<double>(traj.size());
    log.mean_reward /= n;
    log.stability /= n;
    log.focus /= n;
    log.stealth /= n;
    log.mean_abs_delta /= n;
    // The priming round is not a perturbed round.
    const auto& h = env.history();
    std::vector<RoundRecord> episode(h.begin() + 1, h.end());
    log.rur = episode.size() >= 2 ? compute_rur(episode) : 0.0;
    for (std::size_t t = 0; t + 1 < episode.size(); ++t) {
      const auto& a = episode[t].indices;
      const auto& b = episode[t + 1].indices;
      std::vector<std::uint32_t> inter;
      std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
      shared_total += inter.size();
      size_total += a.size();
    }
    log.rur_so_far = size_total ? static_cast<double>(shared_total) / static_cast<double>(size_total) : 0.0;
    all.insert(all.end(), episode.begin(), episode.end());

    if (!opts.random_baseline) ppo_update(traj, 0.0, res.policy, opt, cfg.train.ppo, ppo_rng);
    if (opts.on_iteration) opts.on_iteration(log);
    res.log.push_back(log);
  }
  res.records = std::move(all);
  return res;
}

inline void write_training_log_header(std::ostream& os) {
  os << "iteration,mean_reward,rur,rur_so_far,stability,focus,stealth,mean_abs_delta\n";
}

inline void write_training_log_row(std::ostream& os, const IterationLog& l) {
  os << l.iteration << ',' << detail::format_double(l.mean_reward) << ',' << detail::format_double(l.rur) << ','
     << detail::format_double(l.rur_so_far) << ',' << detail::format_double(l.stability) << ','
     << detail::format_double(l.focus) << ',' << detail::format_double(l.stealth) << ','
     << detail::format_double(l.mean_abs_delta) << '\n';
}

}  // namespace hammersim
