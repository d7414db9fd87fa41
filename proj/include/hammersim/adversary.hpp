#pragma once

// Observation, reward and target-window logic of the attacking agent.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "hammersim/channel.hpp"
#include "hammersim/common.hpp"
#include "hammersim/fl.hpp"

namespace hammersim {

/// Pooled clean-input features followed by the update mask u_t. The mask is
/// kept as its set of ones; `dense()` expands it.
struct Observation {
  std::vector<double> features;
  std::vector<std::uint32_t> active;  // sorted indices where u_t = 1
  std::size_t mask_len = 0;

  std::size_t size() const { return features.size() + mask_len; }

  std::vector<double> dense() const {
    std::vector<double> out(features);
    out.resize(size(), 0.0);
    for (auto i : active) out[features.size() + i] = 1.0;
    return out;
  }
};

/// Mean |x| over `bins` equal chunks of the clean input.
inline std::vector<double> pooled_magnitude(std::span<const double> x, std::size_t bins) {
  require(bins > 0 && x.size() >= bins, "cannot pool input into that many bins");
  std::vector<double> out(bins, 0.0);
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t lo = b * x.size() / bins, hi = (b + 1) * x.size() / bins;
    for (std::size_t i = lo; i < hi; ++i) out[b] += std::abs(x[i]);
    out[b] /= static_cast<double>(hi - lo);
  }
  return out;
}

inline Observation build_observation(std::span<const double> x_features, const RoundRecord& record,
                                     std::size_t total_params) {
  Observation obs;
  obs.features.assign(x_features.begin(), x_features.end());
  obs.active = record.indices;
  obs.mask_len = total_params;
  for (auto i : obs.active) require(i < total_params, "update index outside the mask");
  return obs;
}

/// Wasserstein-1 distance between the uniform distributions on {idx / M} of
/// two index sets, from the integral of |F_prev - F_curr|. Evaluated in exact
/// integer arithmetic and divided once at the end.
inline double compute_emd(std::span<const std::uint32_t> u_prev, std::span<const std::uint32_t> u_curr,
                          std::size_t total_params) {
  if (u_prev.empty() || u_curr.empty()) throw InvalidArgument("EMD needs two nonempty index sets");
  require(total_params > 0, "model size must be positive");
  std::vector<std::uint32_t> a(u_prev.begin(), u_prev.end()), b(u_curr.begin(), u_curr.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  require(a.back() < total_params && b.back() < total_params, "index outside the model");

  const auto na = static_cast<__int128>(a.size()), nb = static_cast<__int128>(b.size());
  std::size_t ia = 0, ib = 0;
  __int128 area = 0;  // in units of 1 / (na * nb) index-steps
  std::uint32_t x = std::min(a.front(), b.front());
  while (ia < a.size() || ib < b.size()) {
    const std::uint32_t next_a = ia < a.size() ? a[ia] : UINT32_MAX;
    const std::uint32_t next_b = ib < b.size() ? b[ib] : UINT32_MAX;
    const std::uint32_t next = std::min(next_a, next_b);
    const __int128 gap = static_cast<__int128>(ia) * nb - static_cast<__int128>(ib) * na;
    area += (gap < 0 ? -gap : gap) * static_cast<__int128>(next - x);
    x = next;
    while (ia < a.size() && a[ia] == x) ++ia;
    while (ib < b.size() && b[ib] == x) ++ib;
  }
  return static_cast<double>(static_cast<long double>(area) /
                             (static_cast<long double>(na * nb) * static_cast<long double>(total_params)));
}

struct TargetWindow {
  std::size_t i = 0;
  std::size_t j = 0;  // exclusive

  std::size_t size() const { return j - i; }
  bool contains(std::size_t idx) const { return idx >= i && idx < j; }
  friend bool operator==(const TargetWindow&, const TargetWindow&) = default;
};

/// Fraction of U_t inside [i, j); 0 for an empty set.
inline double target_focus(std::span<const std::uint32_t> u, const TargetWindow& w) {
  if (u.empty()) return 0.0;
  std::size_t inside = 0;
  for (auto idx : u) inside += w.contains(idx) ? 1 : 0;
  return static_cast<double>(inside) / static_cast<double>(u.size());
}

/// Densest contiguous window over the first `warmup` rounds; ties go to the smallest start.
inline TargetWindow select_target_window(std::span<const RoundRecord> history, std::size_t window_len,
                                         std::size_t warmup, std::size_t total_params) {
  require(warmup >= 1, "warmup must be at least one round");
  require(history.size() >= warmup, "history shorter than the warmup");
  if (window_len == 0 || window_len > total_params) throw InvalidArgument("target window length must lie in [1, M]");
  std::vector<std::uint64_t> count(total_params, 0);
  for (std::size_t r = 0; r < warmup; ++r)
    for (auto idx : history[r].indices) ++count.at(idx);
  std::uint64_t sum = 0;
  for (std::size_t k = 0; k < window_len; ++k) sum += count[k];
  std::uint64_t best = sum;
  std::size_t best_i = 0;
  for (std::size_t i = 1; i + window_len <= total_params; ++i) {
    sum += count[i + window_len - 1];
    sum -= count[i - 1];
    if (sum > best) {
      best = sum;
      best_i = i;
    }
  }
  return {best_i, best_i + window_len};
}

inline std::size_t default_window_len(std::size_t total_params) {
  return std::clamp<std::size_t>(ceil_fraction(0.02, total_params), 1, total_params);
}

struct StftConfig {
  std::size_t frame_len = 256;
  std::size_t hop = 128;
};

/// lambda1 * ||STFT(x + d) - STFT(x)||_F + lambda2 * rms(d).
inline double perceptibility_audio(std::span<const double> delta, std::span<const double> x_clean, double lambda1,
                                   double lambda2, const StftConfig& stft_cfg = {}) {
  require(delta.size() == x_clean.size(), "perturbation and clean input lengths differ");
  require(!delta.empty(), "empty perturbation");
  double spectral = 0.0;
  if (lambda1 != 0.0) {
    std::vector<double> mixed(x_clean.begin(), x_clean.end());
    for (std::size_t i = 0; i < mixed.size(); ++i) mixed[i] += delta[i];
    const auto s_mixed = stft(mixed, stft_cfg.frame_len, stft_cfg.hop);
    const auto s_clean = stft(x_clean, stft_cfg.frame_len, stft_cfg.hop);
    double sq = 0.0;
    for (std::size_t k = 0; k < s_mixed.data.size(); ++k) sq += std::norm(s_mixed.data[k] - s_clean.data[k]);
    spectral = std::sqrt(sq);
  }
  double ms = 0.0;
  for (double d : delta) ms += d * d;
  const double rms = std::sqrt(ms / static_cast<double>(delta.size()));
  return lambda1 * spectral + lambda2 * rms;
}

/// lambda * sum of squared perturbation entries.
inline double perceptibility_image(std::span<const double> delta, double lambda) {
  double sq = 0.0;
  for (double d : delta) sq += d * d;
  return lambda * sq;
}

struct RewardConfig {
  double alpha = 1.0;
  double beta = 0.8;
  double gamma = 0.6;
  double lambda1 = 0.5;
  double lambda2 = 0.5;
  double lambda_image = 0.8;
  double epsilon = 0.1;
  StftConfig stft;

  void validate() const {
    for (double v : {alpha, beta, gamma, lambda1, lambda2, lambda_image})
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("reward coefficients must be finite and non-negative");
    if (!(epsilon > 0.0)) throw ConfigError("perturbation budget must be positive");
  }
};

struct RewardBreakdown {
  double stability = 0.0;
  double focus = 0.0;
  double stealth_penalty = 0.0;
  double total = 0.0;
};

/// alpha * (1 - EMD) + beta * focus - gamma * stealth.
inline RewardBreakdown compute_reward(std::span<const std::uint32_t> u_prev, std::span<const std::uint32_t> u_curr,
                                      const TargetWindow& w, const Perturbation& delta,
                                      std::span<const double> x_clean, const RewardConfig& cfg, Modality modality,
                                      std::size_t total_params) {
  RewardBreakdown r;
  r.stability = 1.0 - compute_emd(u_prev, u_curr, total_params);
  r.focus = target_focus(u_curr, w);
  r.stealth_penalty = modality == Modality::audio
                          ? perceptibility_audio(delta.delta, x_clean, cfg.lambda1, cfg.lambda2, cfg.stft)
                          : perceptibility_image(delta.delta, cfg.lambda_image);
  r.total = cfg.alpha * r.stability + cfg.beta * r.focus - cfg.gamma * r.stealth_penalty;
  return r;
}

}  // namespace hammersim
