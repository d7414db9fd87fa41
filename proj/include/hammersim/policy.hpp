#pragma once

// Small Gaussian policy and value network trained with a clipped-surrogate
// policy gradient (PPO) and generalized advantage estimation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "hammersim/adversary.hpp"
#include "hammersim/common.hpp"

namespace hammersim {

/// Fully connected network with tanh hidden units and a linear output.
/// Weights are stored input-major so a sparse binary input adds whole rows.
/// The mask part of the input enters mean-pooled (scaled by 1 / |active|), so
/// the first layer sees an embedding average whatever the update count.
class Mlp {
 public:
  Mlp() = default;

  explicit Mlp(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
    require(sizes_.size() >= 2, "network needs an input and an output size");
    for (auto s : sizes_) require(s > 0, "layer sizes must be positive");
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      w_off_.push_back(off);
      off += sizes_[l] * sizes_[l + 1];
      b_off_.push_back(off);
      off += sizes_[l + 1];
    }
    params_.assign(off, 0.0);
  }

  /// Scaled-normal weights (std = gain / sqrt(fan_in)), zero biases; the
  /// output layer uses `output_gain`.
  void init(Rng& rng, double gain, double output_gain) {
    std::fill(params_.begin(), params_.end(), 0.0);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const double g = l + 2 == sizes_.size() ? output_gain : gain;
      const double sd = g / std::sqrt(static_cast<double>(sizes_[l]));
      for (std::size_t k = 0; k < sizes_[l] * sizes_[l + 1]; ++k) params_[w_off_[l] + k] = sd * rng.normal();
    }
  }

  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  struct Cache {
    std::vector<std::vector<double>> act;  // act[0] unused (input kept sparse); act[l] post-activation
  };

  std::vector<double> forward(const Observation& obs, Cache* cache = nullptr) const {
    require(obs.size() == input_size(), "observation length does not match the network");
    const std::size_t layers = sizes_.size() - 1;
    std::vector<double> cur(sizes_[1]);
    {
      const double* w = params_.data() + w_off_[0];
      const double* b = params_.data() + b_off_[0];
      const std::size_t out = sizes_[1];
      std::copy(b, b + out, cur.begin());
      for (std::size_t k = 0; k < obs.features.size(); ++k) {
        const double x = obs.features[k];
        if (x == 0.0) continue;
        for (std::size_t o = 0; o < out; ++o) cur[o] += x * w[k * out + o];
      }
      const std::size_t base = obs.features.size();
      const double ms = mask_scale(obs);
      for (auto i : obs.active)
        for (std::size_t o = 0; o < out; ++o) cur[o] += ms * w[(base + i) * out + o];
    }
    if (cache) cache->act.assign(layers + 1, {});
    for (std::size_t l = 1; l < layers; ++l) {
      for (double& v : cur) v = std::tanh(v);
      if (cache) cache->act[l] = cur;
      const std::size_t in = sizes_[l], out = sizes_[l + 1];
      const double* w = params_.data() + w_off_[l];
      const double* b = params_.data() + b_off_[l];
      std::vector<double> next(b, b + out);
      for (std::size_t k = 0; k < in; ++k)
        for (std::size_t o = 0; o < out; ++o) next[o] += cur[k] * w[k * out + o];
      cur = std::move(next);
    }
    for (double v : cur)
      if (!std::isfinite(v)) throw NumericError("network output is non-finite");
    return cur;
  }

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  void backward(const Observation& obs, const Cache& cache, std::span<const double> d_out, std::span<double> grad) const {
    require(grad.size() == params_.size(), "gradient buffer size mismatch");
    const std::size_t layers = sizes_.size() - 1;
    std::vector<double> d(d_out.begin(), d_out.end());
    for (std::size_t l = layers; l-- > 1;) {
      const std::size_t in = sizes_[l], out = sizes_[l + 1];
      const auto& a = cache.act[l];
      double* gw = grad.data() + w_off_[l];
      double* gb = grad.data() + b_off_[l];
      const double* w = params_.data() + w_off_[l];
      std::vector<double> d_prev(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) gb[o] += d[o];
      for (std::size_t k = 0; k < in; ++k) {
        double acc = 0.0;
        for (std::size_t o = 0; o < out; ++o) {
          gw[k * out + o] += a[k] * d[o];
          acc += w[k * out + o] * d[o];
        }
        d_prev[k] = acc * (1.0 - a[k] * a[k]);
      }
      d = std::move(d_prev);
    }
    const std::size_t out = sizes_[1];
    double* gw = grad.data() + w_off_[0];
    double* gb = grad.data() + b_off_[0];
    for (std::size_t o = 0; o < out; ++o) gb[o] += d[o];
    for (std::size_t k = 0; k < obs.features.size(); ++k) {
      const double x = obs.features[k];
      if (x == 0.0) continue;
      for (std::size_t o = 0; o < out; ++o) gw[k * out + o] += x * d[o];
    }
    const std::size_t base = obs.features.size();
    const double ms = mask_scale(obs);
    for (auto i : obs.active)
      for (std::size_t o = 0; o < out; ++o) gw[(base + i) * out + o] += ms * d[o];
  }

  static double mask_scale(const Observation& obs) {
    return obs.active.empty() ? 0.0 : 1.0 / static_cast<double>(obs.active.size());
  }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> w_off_, b_off_;
  std::vector<double> params_;
};

struct PolicyConfig {
  std::vector<std::size_t> hidden{32, 32};
  double init_log_std = -3.0;
  double hidden_gain = 1.0;
  double mean_output_gain = 0.01;
  double value_output_gain = 1.0;
};

/// Mean network, state-independent log-std vector, separate value network.
struct PolicyParams {
  Mlp mean;
  std::vector<double> log_std;
  Mlp value;

  std::size_t action_dim() const { return log_std.size(); }
  std::size_t obs_dim() const { return mean.input_size(); }
};

inline PolicyParams make_policy(std::size_t obs_dim, std::size_t action_dim, const PolicyConfig& cfg, std::uint64_t seed) {
  std::vector<std::size_t> ms{obs_dim}, vs{obs_dim};
  for (auto h : cfg.hidden) {
    ms.push_back(h);
    vs.push_back(h);
  }
  ms.push_back(action_dim);
  vs.push_back(1);
  PolicyParams p{Mlp(ms), std::vector<double>(action_dim, cfg.init_log_std), Mlp(vs)};
  Rng rng(seed);
  p.mean.init(rng, cfg.hidden_gain, cfg.mean_output_gain);
  p.value.init(rng, cfg.hidden_gain, cfg.value_output_gain);
  return p;
}

struct PolicyOutput {
  std::vector<double> mean;
  std::vector<double> log_std;
  double value = 0.0;
};

inline PolicyOutput policy_forward(const Observation& obs, const PolicyParams& params) {
  PolicyOutput out;
  out.mean = params.mean.forward(obs);
  out.log_std = params.log_std;
  out.value = params.value.forward(obs)[0];
  return out;
}

inline constexpr double kLog2Pi = 1.8378770664093453;

inline double gaussian_log_prob(std::span<const double> action, std::span<const double> mean,
                                std::span<const double> log_std) {
  double lp = 0.0;
  for (std::size_t d = 0; d < action.size(); ++d) {
    const double z = (action[d] - mean[d]) * std::exp(-log_std[d]);
    lp += -0.5 * z * z - log_std[d] - 0.5 * kLog2Pi;
  }
  return lp;
}

inline double gaussian_entropy(std::span<const double> log_std) {
  double h = 0.0;
  for (double s : log_std) h += s + 0.5 * (kLog2Pi + 1.0);
  return h;
}

/// mean + exp(log_std) * eta with eta drawn from `rng`.
inline std::vector<double> sample_action(const PolicyOutput& out, Rng& rng) {
  std::vector<double> a(out.mean.size());
  for (std::size_t d = 0; d < a.size(); ++d) a[d] = out.mean[d] + std::exp(out.log_std[d]) * rng.normal();
  return a;
}

struct Transition {
  Observation obs;
  std::vector<double> action;
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
};

struct PpoConfig {
  double clip_ratio = 0.2;
  double discount = 0.99;
  double smoothing = 0.95;  // GAE lambda
  double learning_rate = 3e-3;
  double value_learning_rate = 3e-3;
  std::size_t epochs = 4;
  std::size_t minibatch = 25;
  double entropy_coef = 0.01;
  bool normalize_advantages = true;

  void validate() const {
    if (!(clip_ratio > 0.0 && clip_ratio < 1.0)) throw ConfigError("clip ratio must lie in (0, 1)");
    if (!(discount >= 0.0 && discount <= 1.0) || !(smoothing >= 0.0 && smoothing <= 1.0))
      throw ConfigError("discount and smoothing must lie in [0, 1]");
    if (learning_rate < 0.0 || value_learning_rate < 0.0) throw ConfigError("learning rates must be non-negative");
    if (epochs == 0 || minibatch == 0) throw ConfigError("epochs and minibatch size must be positive");
    if (entropy_coef < 0.0) throw ConfigError("entropy coefficient must be non-negative");
  }
};

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// Generalized advantage estimation over one episode; `last_value` bootstraps
/// the state after the final transition (0 for a terminal episode end).
inline Advantages compute_gae(std::span<const double> rewards, std::span<const double> values, double last_value,
                              double discount, double smoothing) {
  require(rewards.size() == values.size(), "rewards and values differ in length");
  Advantages out;
  out.advantages.assign(rewards.size(), 0.0);
  out.returns.assign(rewards.size(), 0.0);
  double next_adv = 0.0, next_value = last_value;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    const double td = rewards[t] + discount * next_value - values[t];
    next_adv = td + discount * smoothing * next_adv;
    out.advantages[t] = next_adv;
    out.returns[t] = next_adv + values[t];
    next_value = values[t];
  }
  return out;
}

/// Adam over one flat parameter vector.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    require(params.size() == m_.size() && grad.size() == m_.size(), "optimizer state size mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grad[i];
      if (g == 0.0 && m_[i] == 0.0 && v_[i] == 0.0) continue;
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * g;
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * g * g;
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  double lr_ = 1e-3;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

/// Flat gradient buffers matching PolicyParams: mean-network parameters
/// followed by log-std for the policy, value-network parameters separately.
struct PolicyGradient {
  std::vector<double> policy;
  std::vector<double> value;
};

/// Clipped-surrogate policy loss (negated, minus the entropy bonus) averaged
/// over `batch`; accumulates its gradient into `grad` when given.
inline double ppo_policy_loss(const PolicyParams& params, std::span<const Transition> batch,
                              std::span<const double> advantages, const PpoConfig& cfg,
                              std::vector<double>* grad = nullptr) {
  require(batch.size() == advantages.size() && !batch.empty(), "batch and advantages differ in length");
  const std::size_t n_mean = params.mean.params().size(), d = params.action_dim();
  if (grad) grad->assign(n_mean + d, 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  std::vector<double> d_mean(d);
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto& tr = batch[s];
    Mlp::Cache cache;
    const auto mean = params.mean.forward(tr.obs, grad ? &cache : nullptr);
    const double lp = gaussian_log_prob(tr.action, mean, params.log_std);
    const double ratio = std::exp(lp - tr.log_prob);
    const double a = advantages[s];
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio);
    const double surrogate = std::min(ratio * a, clipped * a);
    loss -= surrogate * inv_n;
    if (!grad) continue;
    // The unclipped branch carries the gradient unless clipping binds.
    const bool active = ratio * a <= clipped * a;
    const double g = active ? -a * ratio * inv_n : 0.0;  // d(loss)/d(log_prob)
    for (std::size_t k = 0; k < d; ++k) {
      const double inv_var = std::exp(-2.0 * params.log_std[k]);
      const double diff = tr.action[k] - mean[k];
      d_mean[k] = g * diff * inv_var;
      (*grad)[n_mean + k] += g * (diff * diff * inv_var - 1.0);
    }
    params.mean.backward(tr.obs, cache, d_mean, std::span<double>(grad->data(), n_mean));
  }
  loss -= cfg.entropy_coef * gaussian_entropy(params.log_std);
  if (grad)
    for (std::size_t k = 0; k < d; ++k) (*grad)[n_mean + k] -= cfg.entropy_coef;
  if (!std::isfinite(loss)) throw NumericError("policy loss is non-finite");
  return loss;
}

/// 0.5 * mean squared error of the value network against `returns`.
inline double ppo_value_loss(const PolicyParams& params, std::span<const Transition> batch,
                             std::span<const double> returns, std::vector<double>* grad = nullptr) {
  require(batch.size() == returns.size() && !batch.empty(), "batch and returns differ in length");
  if (grad) grad->assign(params.value.params().size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    Mlp::Cache cache;
    const double v = params.value.forward(batch[s].obs, grad ? &cache : nullptr)[0];
    const double err = v - returns[s];
    loss += 0.5 * err * err * inv_n;
    if (grad) {
      const double dv = err * inv_n;
      params.value.backward(batch[s].obs, cache, std::span<const double>(&dv, 1), *grad);
    }
  }
  if (!std::isfinite(loss)) throw NumericError("value loss is non-finite");
  return loss;
}

/// Optimizer state that persists across PPO updates.
struct PpoOptimizer {
  Adam policy;
  Adam value;

  static PpoOptimizer for_params(const PolicyParams& p, const PpoConfig& cfg) {
    return {Adam(p.mean.params().size() + p.action_dim(), cfg.learning_rate),
            Adam(p.value.params().size(), cfg.value_learning_rate)};
  }
};

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
};

/// One PPO update on a single episode. Minibatch order comes from `rng`.
inline PpoStats ppo_update(std::span<const Transition> trajectory, double last_value, PolicyParams& params,
                           PpoOptimizer& opt, const PpoConfig& cfg, Rng& rng) {
  require(!trajectory.empty(), "empty trajectory");
  std::vector<double> rewards, values;
  for (const auto& t : trajectory) {
    rewards.push_back(t.reward);
    values.push_back(t.value);
  }
  auto gae = compute_gae(rewards, values, last_value, cfg.discount, cfg.smoothing);
  if (cfg.normalize_advantages && gae.advantages.size() > 1) {
    const double n = static_cast<double>(gae.advantages.size());
    const double mean = std::accumulate(gae.advantages.begin(), gae.advantages.end(), 0.0) / n;
    double var = 0.0;
    for (double a : gae.advantages) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / n);
    if (sd > 1e-12)
      for (double& a : gae.advantages) a = (a - mean) / sd;
  }

  std::vector<double> flat_policy(params.mean.params().size() + params.action_dim());
  std::vector<std::size_t> order(trajectory.size());
  std::iota(order.begin(), order.end(), 0);
  PpoStats stats;
  std::vector<double> grad;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.minibatch) {
      const std::size_t hi = std::min(order.size(), lo + cfg.minibatch);
      std::vector<Transition> mb;
      std::vector<double> adv, ret;
      for (std::size_t k = lo; k < hi; ++k) {
        mb.push_back(trajectory[order[k]]);
        adv.push_back(gae.advantages[order[k]]);
        ret.push_back(gae.returns[order[k]]);
      }
      stats.policy_loss = ppo_policy_loss(params, mb, adv, cfg, &grad);
      auto& mp = params.mean.params();
      std::copy(mp.begin(), mp.end(), flat_policy.begin());
      std::copy(params.log_std.begin(), params.log_std.end(), flat_policy.begin() + static_cast<std::ptrdiff_t>(mp.size()));
      opt.policy.step(flat_policy, grad);
      std::copy(flat_policy.begin(), flat_policy.begin() + static_cast<std::ptrdiff_t>(mp.size()), mp.begin());
      std::copy(flat_policy.begin() + static_cast<std::ptrdiff_t>(mp.size()), flat_policy.end(), params.log_std.begin());

      stats.value_loss = ppo_value_loss(params, mb, ret, &grad);
      opt.value.step(params.value.params(), grad);
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Checkpoints: "HSCK", u32 version, u64 config hash, u64 action dim, u32
// layer count + u64 sizes, u64 weight count, f32 weights (mean net, log-std,
// value net), all little-endian.

inline constexpr char kCheckpointMagic[4] = {'H', 'S', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string encode_checkpoint(const PolicyParams& p, std::uint64_t config_hash) {
  std::string out(kCheckpointMagic, 4);
  append_le<std::uint32_t>(out, kCheckpointVersion);
  append_le<std::uint64_t>(out, config_hash);
  append_le<std::uint64_t>(out, p.action_dim());
  const auto& sizes = p.mean.sizes();
  append_le<std::uint32_t>(out, static_cast<std::uint32_t>(sizes.size()));
  for (auto s : sizes) append_le<std::uint64_t>(out, s);
  const std::uint64_t n = p.mean.params().size() + p.action_dim() + p.value.params().size();
  append_le<std::uint64_t>(out, n);
  auto put = [&](double v) { append_le<float>(out, static_cast<float>(v)); };
  for (double v : p.mean.params()) put(v);
  for (double v : p.log_std) put(v);
  for (double v : p.value.params()) put(v);
  return out;
}

struct Checkpoint {
  std::uint64_t config_hash = 0;
  PolicyParams params;
};

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kCheckpointMagic, 4))
    throw ConfigError("not a policy checkpoint");
  std::size_t pos = 4;
  if (read_le<std::uint32_t>(bytes, pos) != kCheckpointVersion) throw ConfigError("unsupported checkpoint version");
  Checkpoint ck;
  ck.config_hash = read_le<std::uint64_t>(bytes, pos);
  const auto action_dim = read_le<std::uint64_t>(bytes, pos);
  const auto layers = read_le<std::uint32_t>(bytes, pos);
  if (layers < 2 || layers > 64) throw ConfigError("corrupt checkpoint layer table");
  std::vector<std::size_t> sizes;
  for (std::uint32_t l = 0; l < layers; ++l) sizes.push_back(read_le<std::uint64_t>(bytes, pos));
  if (sizes.back() != action_dim) throw ConfigError("checkpoint action size mismatch");
  std::vector<std::size_t> vsizes = sizes;
  vsizes.back() = 1;
  ck.params = PolicyParams{Mlp(sizes), std::vector<double>(action_dim), Mlp(vsizes)};
  const auto n = read_le<std::uint64_t>(bytes, pos);
  if (n != ck.params.mean.params().size() + action_dim + ck.params.value.params().size())
    throw ConfigError("checkpoint weight count mismatch");
  auto get = [&] { return static_cast<double>(read_le<float>(bytes, pos)); };
  for (double& v : ck.params.mean.params()) v = get();
  for (double& v : ck.params.log_std) v = get();
  for (double& v : ck.params.value.params()) v = get();
  if (pos != bytes.size()) throw ConfigError("trailing bytes after checkpoint");
  return ck;
}

}  // namespace hammersim
