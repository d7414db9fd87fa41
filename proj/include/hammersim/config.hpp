#pragma once

// Experiment configuration: INI file with sections, every key optional,
// unknown keys rejected. The config hash covers the fully resolved values.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "hammersim/adversary.hpp"
#include "hammersim/channel.hpp"
#include "hammersim/common.hpp"
#include "hammersim/dram.hpp"
#include "hammersim/fl.hpp"
#include "hammersim/memmap.hpp"
#include "hammersim/policy.hpp"

namespace hammersim {

struct AgentConfig {
  std::size_t latent_dim = 32;
  std::size_t warmup_rounds = 10;
  std::size_t window_len = 0;  // 0: ceil(0.02 M)
  std::size_t obs_bins = 16;
  RewardConfig reward;
};

struct TrainConfig {
  std::size_t iterations = 100;
  PpoConfig ppo;
  PolicyConfig policy;
};

struct SimulateConfig {
  std::string source = "synthetic";  // synthetic | trace
  std::string trace;                 // round-record file for source = trace
  std::string model = "Conformer-CTC-S";
  double sparsity = 0.001;
  std::size_t windows = 2;
  std::size_t messages_per_round = 1000;
  std::size_t max_trace_events = 100000;
  bool coalesce = true;
};

struct MetricsConfig {
  double metadata_bytes_per_entry = 0.0;
  std::uint64_t threshold_quantum = 10000;
};

/// Defaults are the desk-scale audio preset (configs/desk.ini): a 512-sample
/// 32 kHz capture resampled to the 256-input model, and a myopic learner.
struct ExperimentConfig {
  ExperimentConfig() {
    federation.channel.audio.source_rate = 32000.0;
    train.ppo.discount = 0.0;
  }

  std::uint64_t seed = 1;
  std::string out = "runs/default";
  FederationConfig federation;
  AgentConfig agent;
  TrainConfig train;
  DramMapping mapping;
  LayoutConfig layout;
  SimulationConfig dram;
  std::string thresholds_file;
  MetricsConfig metrics;
  SimulateConfig simulate;

  void validate() const;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) throw ConfigError(key + ": expected an integer");
  try {
    std::size_t pos = 0;
    const int base = t.size() > 2 && t[0] == '0' && (t[1] == 'x' || t[1] == 'X') ? 16 : 10;
    const auto v = std::stoull(t, &pos, base);
    if (pos != t.size() || t[0] == '-') throw std::invalid_argument(t);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError(key + ": '" + t + "' is not a non-negative integer");
  }
}

inline double parse_real(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  try {
    std::size_t pos = 0;
    const double v = std::stod(t, &pos);
    if (pos != t.size() || !std::isfinite(v)) throw std::invalid_argument(t);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError(key + ": '" + t + "' is not a finite number");
  }
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(key + ": '" + t + "' is not a boolean");
}

/// Reads keys from a property tree into the config fields.
class Loader {
 public:
  explicit Loader(const boost::property_tree::ptree& tree) : tree_(tree) {}

  template <class T>
  void operator()(const std::string& key, T& field) {
    const auto node = tree_.get_optional<std::string>(boost::property_tree::ptree::path_type(key, '.'));
    if (!node) return;
    const std::string& text = *node;
    if constexpr (std::is_same_v<T, bool>) {
      field = parse_bool(key, text);
    } else if constexpr (std::is_integral_v<T>) {
      const auto v = parse_uint(key, text);
      if (v > std::numeric_limits<T>::max()) throw ConfigError(key + ": value out of range");
      field = static_cast<T>(v);
    } else if constexpr (std::is_floating_point_v<T>) {
      field = parse_real(key, text);
    } else if constexpr (std::is_same_v<T, std::string>) {
      field = trim(text);
    } else if constexpr (std::is_same_v<T, Modality>) {
      try {
        field = parse_modality(trim(text));
      } catch (const Error& e) {
        throw ConfigError(key + ": " + e.what());
      }
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      field.clear();
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!trim(item).empty()) field.push_back(static_cast<std::size_t>(parse_uint(key, item)));
    } else {
      static_assert(sizeof(T) == 0, "unsupported config field type");
    }
  }

 private:
  const boost::property_tree::ptree& tree_;
};

/// Canonical `section.key=value` lines of the resolved config.
class Dumper {
 public:
  template <class T>
  void operator()(const std::string& key, const T& field) {
    out << key << '=';
    if constexpr (std::is_same_v<T, bool>) out << (field ? "true" : "false");
    else if constexpr (std::is_integral_v<T>) out << static_cast<std::uint64_t>(field);
    else if constexpr (std::is_floating_point_v<T>) out << format_double(field);
    else if constexpr (std::is_same_v<T, std::string>) out << field;
    else if constexpr (std::is_same_v<T, Modality>) out << to_string(field);
    else {
      for (std::size_t i = 0; i < field.size(); ++i) out << (i ? "," : "") << field[i];
    }
    out << '\n';
  }
  std::ostringstream out;
};

class KeyCollector {
 public:
  template <class T>
  void operator()(const std::string& key, const T&) {
    keys.insert(key);
  }
  std::set<std::string> keys;
};

template <class Cfg, class V>
void visit_fields(Cfg& c, V&& v) {
  v("run.seed", c.seed);
  v("run.out", c.out);

  auto& f = c.federation;
  v("federation.modality", f.modality);
  v("federation.clients", f.n_clients);
  v("federation.sparsity", f.sparsity);
  v("federation.learning_rate", f.learning_rate);
  v("federation.local_epochs", f.local_epochs);
  v("federation.rounds_per_episode", f.rounds_per_episode);
  v("federation.shard_size", f.shard_size);
  v("federation.hidden", f.hidden);
  v("federation.classes", f.classes);
  v("federation.label_skew", f.label_skew);
  v("federation.template_amplitude", f.template_amplitude);
  v("federation.sample_noise", f.sample_noise);
  v("federation.source_length", f.source_length);
  v("federation.image_rows", f.image_rows);
  v("federation.image_cols", f.image_cols);
  v("federation.init_scale_hidden", f.init_scale_hidden);
  v("federation.init_scale_output", f.init_scale_output);
  v("federation.metadata_bits_per_entry", f.metadata_bits_per_entry);

  auto& ch = f.channel;
  v("channel.noise_std", ch.audio.noise_std);
  v("channel.source_rate", ch.audio.source_rate);
  v("channel.target_rate", ch.audio.target_rate);
  v("channel.blur_radius", ch.image.blur_radius);
  v("channel.gamma", ch.image.gamma);
  v("channel.texture_seed", ch.image.texture_seed);
  v("channel.texture_strength", ch.image.texture_strength);
  v("channel.rescale_factor", ch.image.rescale_factor);

  auto& a = c.agent;
  v("adversary.latent_dim", a.latent_dim);
  v("adversary.warmup_rounds", a.warmup_rounds);
  v("adversary.window_len", a.window_len);
  v("adversary.obs_bins", a.obs_bins);
  v("adversary.epsilon", a.reward.epsilon);
  v("adversary.alpha", a.reward.alpha);
  v("adversary.beta", a.reward.beta);
  v("adversary.gamma", a.reward.gamma);
  v("adversary.lambda1", a.reward.lambda1);
  v("adversary.lambda2", a.reward.lambda2);
  v("adversary.lambda_image", a.reward.lambda_image);
  v("adversary.stft_frame", a.reward.stft.frame_len);
  v("adversary.stft_hop", a.reward.stft.hop);

  auto& t = c.train;
  v("train.iterations", t.iterations);
  v("train.clip_ratio", t.ppo.clip_ratio);
  v("train.discount", t.ppo.discount);
  v("train.smoothing", t.ppo.smoothing);
  v("train.learning_rate", t.ppo.learning_rate);
  v("train.value_learning_rate", t.ppo.value_learning_rate);
  v("train.epochs", t.ppo.epochs);
  v("train.minibatch", t.ppo.minibatch);
  v("train.entropy_coef", t.ppo.entropy_coef);
  v("train.normalize_advantages", t.ppo.normalize_advantages);
  v("train.hidden", t.policy.hidden);
  v("train.init_log_std", t.policy.init_log_std);
  v("train.hidden_gain", t.policy.hidden_gain);
  v("train.mean_output_gain", t.policy.mean_output_gain);
  v("train.value_output_gain", t.policy.value_output_gain);

  v("memory.banks", c.mapping.bank_count);
  v("memory.rows_per_bank", c.mapping.rows_per_bank);
  v("memory.row_size", c.mapping.row_size_bytes);
  v("memory.bank_xor_shift", c.mapping.bank_xor_shift);
  v("memory.virtual_base", c.layout.virtual_base);
  v("memory.metadata_bytes", c.layout.metadata_bytes);
  v("memory.accumulator_bytes", c.layout.accumulator_bytes);
  v("memory.writeback_bytes", c.layout.writeback_bytes);
  v("memory.ingress_slots", c.layout.ingress_slots);
  v("memory.ingress_slot_bytes", c.layout.ingress_slot_bytes);

  auto& d = c.dram;
  v("dram.refresh_window_s", d.dram.refresh_s);
  v("dram.ref_commands", d.dram.ref_commands);
  v("dram.trc_s", d.dram.trc_s);
  v("dram.data_rate_mts", d.dram.bandwidth.data_rate_mts);
  v("dram.bit_width", d.dram.bandwidth.bit_width);
  v("dram.trr_capacity", d.trr.capacity);
  v("dram.trr_radius", d.trr.radius);
  v("dram.vulnerable_fraction", d.vulnerable_fraction);
  v("dram.multiplier_jitter", d.multiplier_jitter);
  v("dram.default_fill", d.default_fill);
  v("dram.enforce_act_cap", d.enforce_act_cap);

  v("thresholds.file", c.thresholds_file);

  v("metrics.metadata_bytes_per_entry", c.metrics.metadata_bytes_per_entry);
  v("metrics.threshold_quantum", c.metrics.threshold_quantum);

  auto& s = c.simulate;
  v("simulate.source", s.source);
  v("simulate.trace", s.trace);
  v("simulate.model", s.model);
  v("simulate.sparsity", s.sparsity);
  v("simulate.windows", s.windows);
  v("simulate.messages_per_round", s.messages_per_round);
  v("simulate.max_trace_events", s.max_trace_events);
  v("simulate.coalesce", s.coalesce);
}

}  // namespace detail

inline void ExperimentConfig::validate() const {
  federation.channel.validate();
  if (federation.n_clients == 0) throw ConfigError("federation.clients must be positive");
  if (!(federation.sparsity > 0.0 && federation.sparsity <= 1.0)) throw ConfigError("federation.sparsity must lie in (0, 1]");
  if (federation.rounds_per_episode == 0) throw ConfigError("federation.rounds_per_episode must be positive");
  if (agent.latent_dim == 0) throw ConfigError("adversary.latent_dim must be positive");
  if (agent.warmup_rounds == 0) throw ConfigError("adversary.warmup_rounds must be positive");
  agent.reward.validate();
  train.ppo.validate();
  mapping.validate();
  layout.validate();
  dram.dram.validate();
  if (!(dram.vulnerable_fraction >= 0.0 && dram.vulnerable_fraction <= 1.0))
    throw ConfigError("dram.vulnerable_fraction must lie in [0, 1]");
  if (!(dram.multiplier_jitter >= 0.0 && dram.multiplier_jitter < 1.0))
    throw ConfigError("dram.multiplier_jitter must lie in [0, 1)");
  if (metrics.metadata_bytes_per_entry < 0.0) throw ConfigError("metrics.metadata_bytes_per_entry must be >= 0");
  if (metrics.threshold_quantum == 0) throw ConfigError("metrics.threshold_quantum must be positive");
  if (simulate.source != "synthetic" && simulate.source != "trace")
    throw ConfigError("simulate.source must be 'synthetic' or 'trace'");
  if (simulate.windows == 0 || simulate.messages_per_round == 0)
    throw ConfigError("simulate.windows and simulate.messages_per_round must be positive");
  if (!(simulate.sparsity > 0.0 && simulate.sparsity <= 1.0)) throw ConfigError("simulate.sparsity must lie in (0, 1]");
}

inline std::set<std::string> config_keys() {
  ExperimentConfig c;
  detail::KeyCollector k;
  detail::visit_fields(c, k);
  return k.keys;
}

inline ExperimentConfig parse_config(std::istream& is) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.message() + " at line " + std::to_string(e.line()));
  }
  const auto known = config_keys();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      if (!known.count(full)) throw ConfigError("config: unknown key '" + full + "'");
    }
  }
  ExperimentConfig cfg;
  detail::Loader loader(tree);
  detail::visit_fields(cfg, loader);
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in);
}

inline std::string canonical_config(const ExperimentConfig& cfg) {
  detail::Dumper d;
  detail::visit_fields(cfg, d);
  return d.out.str();
}

/// FNV-1a of the canonical text; `run.out` is excluded so relocating a run keeps its hash.
inline std::uint64_t config_hash(ExperimentConfig cfg) {
  cfg.out.clear();
  return fnv1a(canonical_config(cfg));
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline ThresholdTable load_thresholds(const ExperimentConfig& cfg) {
  if (cfg.thresholds_file.empty()) return ThresholdTable::defaults();
  std::ifstream in(cfg.thresholds_file);
  if (!in) throw ConfigError("cannot open threshold file '" + cfg.thresholds_file + "'");
  return parse_threshold_table(in);
}

}  // namespace hammersim
