#pragma once

// Update-clustering metrics and the bandwidth-bounded feasibility chain.

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hammersim/common.hpp"
#include "hammersim/dram.hpp"
#include "hammersim/fl.hpp"
#include "hammersim/timing.hpp"

namespace hammersim {

/// Repeated update rate: sum |U_t & U_t+1| over sum |U_t|, t = 1..T-1.
inline double compute_rur(std::span<const RoundRecord> records) {
  if (records.size() < 2) throw InvalidArgument("RUR needs at least two rounds");
  std::uint64_t shared = 0, total = 0;
  for (std::size_t t = 0; t + 1 < records.size(); ++t) {
    const auto& a = records[t].indices;
    const auto& b = records[t + 1].indices;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
      if (a[i] < b[j]) ++i;
      else if (b[j] < a[i]) ++j;
      else {
        ++shared;
        ++i;
        ++j;
      }
    }
    total += a.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(shared) / static_cast<double>(total);
}

struct ClusterDensity {
  double density = 0.0;  // L / M
  std::uint64_t span = 0;
  std::size_t covered = 0;  // m = ceil(0.9 k)
};

/// Smallest index span holding 90% of one round's updates.
inline ClusterDensity compute_cd(std::span<const std::uint32_t> indices, std::size_t total_params) {
  if (indices.empty()) throw InvalidArgument("cluster density needs a nonempty index set");
  require(total_params > 0, "model size must be positive");
  std::vector<std::uint32_t> s(indices.begin(), indices.end());
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  const std::size_t m = std::max<std::size_t>(1, ceil_fraction(0.9, s.size()));
  std::uint64_t best = UINT64_MAX;
  for (std::size_t j = 0; j + m <= s.size(); ++j) best = std::min<std::uint64_t>(best, s[j + m - 1] - s[j] + 1ull);
  return {static_cast<double>(best) / static_cast<double>(total_params), best, m};
}

/// Value payload of one sparse update: ceil(p M) entries at the model's precision,
/// plus optional per-entry index metadata.
inline double update_size_bytes(std::size_t total_params, int precision_bits, double p,
                                double metadata_bytes_per_entry = 0.0) {
  const auto k = static_cast<double>(sparse_k(p, total_params));
  return k * (static_cast<double>(precision_bits) / 8.0 + metadata_bytes_per_entry);
}

inline double update_size(const ModelSpec& spec, double p, double metadata_bytes_per_entry = 0.0) {
  require(!spec.empty(), "empty model");
  const int bits = spec.layers().front().precision_bits;
  for (const auto& l : spec.layers())
    require(l.precision_bits == bits, "update size needs a uniform model precision");
  return update_size_bytes(spec.total_params(), bits, p, metadata_bytes_per_entry);
}

struct HMax {
  std::uint64_t updates = 0;  // floor(window bytes / update bytes)
  bool exceeds_act_cap = false;
};

/// Sparse updates the link can deliver in one refresh window.
inline HMax h_max(const BandwidthModel& bw, Picoseconds window_ps, double update_bytes, std::uint64_t act_cap) {
  if (!(update_bytes > 0.0)) throw InvalidArgument("update size must be positive");
  // Exact when the update size is a whole number of half bytes.
  const long double bits_in_window = static_cast<long double>(bw.bits_per_second()) * window_ps / kPsPerSecond;
  const long double q = bits_in_window / (8.0L * static_cast<long double>(update_bytes));
  const auto nearest = static_cast<std::uint64_t>(std::llround(static_cast<double>(q)));
  std::uint64_t n = static_cast<std::uint64_t>(q);
  if (std::abs(static_cast<long double>(nearest) - q) < 1e-9L) n = nearest;
  return {n, n > act_cap};
}

/// E[A] = floor(RUR * H_max).
inline std::uint64_t expected_activations(double rur, std::uint64_t hmax) {
  if (!(rur >= 0.0 && rur <= 1.0)) throw InvalidArgument("RUR must lie in [0, 1]");
  return floor_product(rur, static_cast<double>(hmax));
}

enum class Verdict { feasible, marginal, infeasible };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::feasible: return "feasible";
    case Verdict::marginal: return "marginal";
    case Verdict::infeasible: return "infeasible";
  }
  return "?";
}

struct ThresholdSummary {
  std::uint64_t minimum = 0;
  double exact_mean = 0.0;
  std::uint64_t average = 0;  // exact mean rounded up to `quantum`
};

/// Minimum and mean single-sided thresholds. The working average is the mean
/// rounded up to a whole `quantum` (10K reproduces the published 240K).
inline ThresholdSummary summarize_thresholds(const ThresholdTable& t, std::uint64_t quantum = 10000) {
  const auto counts = t.single_sided_counts();
  if (counts.empty()) throw ConfigError("threshold table has no single-sided entries");
  require(quantum > 0, "threshold quantum must be positive");
  ThresholdSummary s;
  s.minimum = *std::min_element(counts.begin(), counts.end());
  std::uint64_t sum = 0;
  for (auto c : counts) sum += c;
  s.exact_mean = static_cast<double>(sum) / static_cast<double>(counts.size());
  const std::uint64_t n = counts.size();
  s.average = (sum + n * quantum - 1) / (n * quantum) * quantum;
  return s;
}

/// feasible when E[A] >= average threshold, marginal when >= the minimum.
inline Verdict feasibility_verdict(std::uint64_t e_act, const ThresholdSummary& s) {
  if (e_act >= s.average) return Verdict::feasible;
  if (e_act >= s.minimum) return Verdict::marginal;
  return Verdict::infeasible;
}

inline Verdict feasibility_verdict(std::uint64_t e_act, const ThresholdTable& t, std::uint64_t quantum = 10000) {
  return feasibility_verdict(e_act, summarize_thresholds(t, quantum));
}

// ---------------------------------------------------------------------------
// Published model presets

struct ModelPreset {
  std::string name;
  std::size_t total_params = 0;
  std::size_t tensors = 0;
  int precision_bits = 0;
};

inline const std::vector<ModelPreset>& model_presets() {
  static const std::vector<ModelPreset> presets{
      {"Conformer-CTC-S", 8'700'000, 480, 4},
      {"Squeezeformer-XS", 9'000'000, 480, 4},
      {"QuartzNet 5x5", 6'700'000, 130, 8},
      {"MobileNetV3 Small", 2'900'000, 142, 8},
  };
  return presets;
}

inline const ModelPreset& find_preset(std::string_view name) {
  for (const auto& p : model_presets()) {
    std::string a(p.name), b(name);
    auto norm = [](std::string s) {
      std::string out;
      for (char c : s)
        if (std::isalnum(static_cast<unsigned char>(c))) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      return out;
    };
    if (norm(a) == norm(b)) return p;
  }
  throw ConfigError("unknown model preset '" + std::string(name) + "'");
}

/// Layered spec of a preset: parameters spread evenly over its tensors.
inline ModelSpec preset_model_spec(const ModelPreset& p) {
  std::vector<LayerSpec> layers;
  const std::size_t base = p.total_params / p.tensors, extra = p.total_params % p.tensors;
  for (std::size_t t = 0; t < p.tensors; ++t)
    layers.push_back({"tensor" + std::to_string(t), base + (t < extra ? 1 : 0), p.precision_bits});
  return ModelSpec(std::move(layers));
}

struct RowReference {
  std::string model;
  double sparsity = 0.0;
  std::uint64_t h_max_k = 0;
  double rur_percent = 0.0;
  std::uint64_t e_act_k = 0;
  Verdict verdict = Verdict::infeasible;
};

/// Published H_max, RUR and E[A] per (model, sparsity), with the verdicts the
/// published discussion assigns.
inline const std::vector<RowReference>& reference_rows() {
  static const std::vector<RowReference> rows{
      {"Conformer-CTC-S", 0.001, 296, 69.5, 206, Verdict::marginal},
      {"Conformer-CTC-S", 0.0005, 592, 60.5, 358, Verdict::feasible},
      {"Squeezeformer-XS", 0.001, 286, 63.1, 180, Verdict::infeasible},
      {"Squeezeformer-XS", 0.0005, 572, 53.7, 307, Verdict::feasible},
      {"QuartzNet 5x5", 0.001, 192, 76.0, 145, Verdict::infeasible},
      {"QuartzNet 5x5", 0.0005, 384, 60.8, 233, Verdict::marginal},
      {"MobileNetV3 Small", 0.001, 444, 63.3, 281, Verdict::feasible},
      {"MobileNetV3 Small", 0.0005, 888, 58.3, 518, Verdict::feasible},
  };
  return rows;
}

struct FeasibilityRow {
  std::string model;
  double sparsity = 0.0;
  std::size_t total_params = 0;
  int precision_bits = 0;
  std::size_t k = 0;
  double update_bytes = 0.0;
  std::uint64_t h_max = 0;
  bool h_max_exceeds_cap = false;
  double rur = 0.0;
  std::uint64_t e_act = 0;
  Verdict verdict = Verdict::infeasible;
  std::vector<std::pair<ThresholdEntry, bool>> per_pattern;  // single-sided entry, reached
};

struct FeasibilityReport {
  double bandwidth_bytes_per_s = 0.0;
  double bandwidth_decimal_bytes_per_s = 0.0;
  double window_bytes = 0.0;
  std::uint64_t act_cap = 0;
  ThresholdSummary thresholds;
  std::vector<FeasibilityRow> rows;
};

struct FeasibilityInput {
  std::string model;
  double sparsity = 0.0;
  double rur = 0.0;
};

inline FeasibilityReport build_feasibility_report(std::span<const FeasibilityInput> inputs, const DramConfig& dram,
                                                  const ThresholdTable& thresholds,
                                                  double metadata_bytes_per_entry = 0.0,
                                                  std::uint64_t threshold_quantum = 10000) {
  dram.validate();
  FeasibilityReport rep;
  rep.bandwidth_bytes_per_s = dram.bandwidth.bytes_per_second();
  rep.bandwidth_decimal_bytes_per_s =
      static_cast<double>(dram.bandwidth.data_rate_mts) * 1e6 * dram.bandwidth.bit_width / 8.0;
  rep.window_bytes = dram.bandwidth.window_bytes(dram.refresh_ps());
  rep.act_cap = dram.act_cap();
  rep.thresholds = summarize_thresholds(thresholds, threshold_quantum);
  for (const auto& in : inputs) {
    const auto& preset = find_preset(in.model);
    FeasibilityRow row;
    row.model = preset.name;
    row.sparsity = in.sparsity;
    row.total_params = preset.total_params;
    row.precision_bits = preset.precision_bits;
    row.k = sparse_k(in.sparsity, preset.total_params);
    row.update_bytes = update_size_bytes(preset.total_params, preset.precision_bits, in.sparsity, metadata_bytes_per_entry);
    const auto h = h_max(dram.bandwidth, dram.refresh_ps(), row.update_bytes, rep.act_cap);
    row.h_max = h.updates;
    row.h_max_exceeds_cap = h.exceeds_act_cap;
    row.rur = in.rur;
    row.e_act = expected_activations(in.rur, row.h_max);
    row.verdict = feasibility_verdict(row.e_act, rep.thresholds);
    for (const auto& e : thresholds.entries())
      if (e.mode == HammerMode::single_sided) row.per_pattern.push_back({e, row.e_act >= e.count});
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

/// The eight published (model, sparsity, RUR) rows.
inline std::vector<FeasibilityInput> reference_inputs() {
  std::vector<FeasibilityInput> out;
  for (const auto& r : reference_rows()) out.push_back({r.model, r.sparsity, r.rur_percent / 100.0});
  return out;
}

/// Whole thousands, truncated (the published tables' display convention).
inline std::uint64_t truncate_k(std::uint64_t v) { return v / 1000; }
/// Whole thousands, rounded to nearest.
inline std::uint64_t nearest_k(std::uint64_t v) { return (v + 500) / 1000; }

}  // namespace hammersim
