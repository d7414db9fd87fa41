#pragma once

// Desk-scale federated learning: model spec, local training, top-k
// sparsification and sparse FedAvg-style aggregation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hammersim/channel.hpp"
#include "hammersim/common.hpp"

namespace hammersim {

struct LayerSpec {
  std::string name;
  std::size_t element_count = 0;
  int precision_bits = 32;
};

/// Ordered layers of a flat parameter vector.
class ModelSpec {
 public:
  ModelSpec() = default;

  explicit ModelSpec(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw InvalidArgument("model spec has no layers");
    std::set<std::string> names;
    offsets_.reserve(layers_.size() + 1);
    offsets_.push_back(0);
    for (const auto& l : layers_) {
      if (l.element_count == 0) throw InvalidArgument("layer '" + l.name + "' has no elements");
      if (l.precision_bits != 4 && l.precision_bits != 8 && l.precision_bits != 32)
        throw InvalidArgument("layer '" + l.name + "' precision must be 4, 8 or 32 bits");
      if (!names.insert(l.name).second) throw InvalidArgument("duplicate layer name '" + l.name + "'");
      offsets_.push_back(offsets_.back() + l.element_count);
    }
  }

  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t layer_count() const { return layers_.size(); }
  std::size_t total_params() const { return offsets_.empty() ? 0 : offsets_.back(); }
  std::size_t layer_offset(std::size_t layer) const { return offsets_.at(layer); }
  bool empty() const { return layers_.empty(); }

  /// Layer containing a global index.
  std::size_t layer_of(std::size_t index) const {
    require(index < total_params(), "parameter index out of range");
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), index);
    return static_cast<std::size_t>(it - offsets_.begin()) - 1;
  }

  int precision_of(std::size_t index) const { return layers_[layer_of(index)].precision_bits; }

 private:
  std::vector<LayerSpec> layers_;
  std::vector<std::size_t> offsets_;
};

/// Global model parameters theta with per-layer segmentation.
struct ParameterStore {
  std::vector<double> values;
  std::vector<std::size_t> layer_offsets;

  static ParameterStore zeros(const ModelSpec& spec) {
    ParameterStore p;
    p.values.assign(spec.total_params(), 0.0);
    for (std::size_t l = 0; l < spec.layer_count(); ++l) p.layer_offsets.push_back(spec.layer_offset(l));
    return p;
  }

  std::size_t size() const { return values.size(); }
};

struct DenseDelta {
  std::vector<double> values;
};

struct SparseEntry {
  std::uint32_t index = 0;
  double value = 0.0;

  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

struct SparseUpdate {
  std::uint64_t round = 0;
  std::uint32_t client_id = 0;
  double sparsity = 0.0;
  std::vector<SparseEntry> entries;

  std::vector<std::uint32_t> indices() const {
    std::vector<std::uint32_t> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.index);
    return out;
  }
};

/// Per-round record of updated indices U_t; u_t is the mask view of the set.
struct RoundRecord {
  std::uint64_t round = 0;
  std::vector<std::uint32_t> indices;  // sorted, unique

  std::vector<std::uint8_t> mask(std::size_t total_params) const {
    std::vector<std::uint8_t> m(total_params, 0);
    for (auto i : indices) m.at(i) = 1;
    return m;
  }

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

/// k = ceil(p * M), the number of entries every sparse update carries.
inline std::size_t sparse_k(double p, std::size_t total_params) {
  if (!(p > 0.0) || p > 1.0) throw InvalidArgument("sparsity must lie in (0, 1]");
  return std::clamp<std::size_t>(ceil_fraction(p, total_params), 1, total_params);
}

/// Top-k by absolute value; ties go to the lower index. Output sorted by index.
inline SparseUpdate sparsify_topk(const DenseDelta& delta, double p, std::uint64_t round = 0,
                                  std::uint32_t client_id = 0) {
  const std::size_t m = delta.values.size();
  require(m > 0, "cannot sparsify an empty delta");
  const std::size_t k = sparse_k(p, m);
  if (!all_finite(delta.values)) throw NumericError("delta contains non-finite values");

  std::vector<std::uint32_t> order(m);
  std::iota(order.begin(), order.end(), 0u);
  const auto& v = delta.values;
  auto before = [&](std::uint32_t a, std::uint32_t b) {
    const double fa = std::abs(v[a]), fb = std::abs(v[b]);
    return fa != fb ? fa > fb : a < b;
  };
  if (k < m) std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);
  order.resize(k);
  std::sort(order.begin(), order.end());

  SparseUpdate u;
  u.round = round;
  u.client_id = client_id;
  u.sparsity = p;
  u.entries.reserve(k);
  for (auto i : order) u.entries.push_back({i, v[i]});
  return u;
}

// ---------------------------------------------------------------------------
// Local training

struct LocalTrainConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 1;  // full-batch: one gradient step per epoch
};

/// An objective exposes `double loss_and_gradient(span<const double>, span<double>) const`.
template <class T>
concept Objective = requires(const T& obj, std::span<const double> p, std::span<double> g) {
  { obj.loss_and_gradient(p, g) } -> std::convertible_to<double>;
};

/// Plain gradient descent from the global parameters; returns local - global.
template <Objective Obj>
DenseDelta local_train(const Obj& objective, const ParameterStore& global, const LocalTrainConfig& cfg) {
  require(cfg.learning_rate >= 0.0, "learning rate must be non-negative");
  std::vector<double> params = global.values;
  std::vector<double> grad(params.size());
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::fill(grad.begin(), grad.end(), 0.0);
    const double loss = objective.loss_and_gradient(params, grad);
    if (!std::isfinite(loss)) throw NumericError("local training loss is non-finite at epoch " + std::to_string(e));
    if (!all_finite(grad)) throw NumericError("local training gradient is non-finite at epoch " + std::to_string(e));
    if (cfg.learning_rate == 0.0) break;
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg.learning_rate * grad[i];
  }
  DenseDelta d;
  d.values.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) d.values[i] = params[i] - global.values[i];
  return d;
}

/// Two-layer ReLU perceptron. Weight matrices are stored input-major
/// (fc1.weight is [input][hidden]) so one input feature owns a contiguous
/// run of parameters.
struct MlpShape {
  std::size_t input_dim = 256;
  std::size_t hidden = 36;
  std::size_t classes = 10;

  std::size_t total_params() const { return input_dim * hidden + hidden + hidden * classes + classes; }
};

inline ModelSpec mlp_model_spec(const MlpShape& s, int precision_bits = 32) {
  return ModelSpec({{"fc1.weight", s.input_dim * s.hidden, precision_bits},
                    {"fc1.bias", s.hidden, precision_bits},
                    {"fc2.weight", s.hidden * s.classes, precision_bits},
                    {"fc2.bias", s.classes, precision_bits}});
}

/// Mean softmax cross-entropy of an MLP over a batch.
class SoftmaxMlpObjective {
 public:
  SoftmaxMlpObjective(MlpShape shape, std::span<const double> inputs, std::span<const std::uint32_t> labels)
      : shape_(shape), inputs_(inputs), labels_(labels) {
    require(!labels.empty(), "training batch is empty");
    require(inputs.size() == labels.size() * shape.input_dim, "input batch is not shaped for the model");
    for (auto y : labels) require(y < shape.classes, "label out of range");
  }

  double loss_and_gradient(std::span<const double> params, std::span<double> grad) const {
    const auto [D, H, C] = std::tuple{shape_.input_dim, shape_.hidden, shape_.classes};
    require(params.size() == shape_.total_params() && grad.size() == params.size(), "parameter vector size mismatch");
    const double* w1 = params.data();
    const double* b1 = w1 + D * H;
    const double* w2 = b1 + H;
    const double* b2 = w2 + H * C;
    double* gw1 = grad.data();
    double* gb1 = gw1 + D * H;
    double* gw2 = gb1 + H;
    double* gb2 = gw2 + H * C;

    const std::size_t n = labels_.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> a(H), h(H), z(C), dz(C), da(H);
    double loss = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const double* x = inputs_.data() + s * D;
      std::copy(b1, b1 + H, a.begin());
      for (std::size_t i = 0; i < D; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* row = w1 + i * H;
        for (std::size_t j = 0; j < H; ++j) a[j] += xi * row[j];
      }
      for (std::size_t j = 0; j < H; ++j) h[j] = a[j] > 0.0 ? a[j] : 0.0;
      std::copy(b2, b2 + C, z.begin());
      for (std::size_t j = 0; j < H; ++j) {
        if (h[j] == 0.0) continue;
        const double* row = w2 + j * C;
        for (std::size_t c = 0; c < C; ++c) z[c] += h[j] * row[c];
      }
      const double zmax = *std::max_element(z.begin(), z.end());
      double norm = 0.0;
      for (std::size_t c = 0; c < C; ++c) norm += std::exp(z[c] - zmax);
      const double log_norm = zmax + std::log(norm);
      loss += (log_norm - z[labels_[s]]) * inv_n;
      for (std::size_t c = 0; c < C; ++c) dz[c] = (std::exp(z[c] - log_norm) - (c == labels_[s] ? 1.0 : 0.0)) * inv_n;

      for (std::size_t c = 0; c < C; ++c) gb2[c] += dz[c];
      for (std::size_t j = 0; j < H; ++j) {
        double dh = 0.0;
        const double* row = w2 + j * C;
        double* grow = gw2 + j * C;
        for (std::size_t c = 0; c < C; ++c) {
          grow[c] += h[j] * dz[c];
          dh += row[c] * dz[c];
        }
        da[j] = a[j] > 0.0 ? dh : 0.0;
        gb1[j] += da[j];
      }
      for (std::size_t i = 0; i < D; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        double* grow = gw1 + i * H;
        for (std::size_t j = 0; j < H; ++j) grow[j] += xi * da[j];
      }
    }
    return loss;
  }

 private:
  MlpShape shape_;
  std::span<const double> inputs_;
  std::span<const std::uint32_t> labels_;
};

// ---------------------------------------------------------------------------
// Aggregation and the logical access script handed to the memory model

enum class Region : std::uint8_t { metadata, values, accumulator, writeback, ingress_queue };
enum class AccessKind : std::uint8_t { read, write };

inline std::string to_string(Region r) {
  switch (r) {
    case Region::metadata: return "metadata";
    case Region::values: return "values";
    case Region::accumulator: return "accumulator";
    case Region::writeback: return "writeback";
    case Region::ingress_queue: return "ingress_queue";
  }
  return "?";
}

struct AccessOp {
  Region region = Region::accumulator;
  std::uint32_t layer = 0;
  std::uint64_t element = 0;  // layer-local element (message slot for the ingress queue)
  AccessKind kind = AccessKind::read;

  friend bool operator==(const AccessOp&, const AccessOp&) = default;
};

/// One received sparse update message. Index lists are shared so replaying
/// many identical messages stays cheap.
struct ScriptMessage {
  std::uint32_t client_id = 0;
  std::uint64_t payload_bits = 0;
  std::shared_ptr<const std::vector<std::uint32_t>> indices;
};

/// Ordered logical operations of one aggregation round. Each message is an
/// ingress-queue write followed by a read+write of the accumulator per entry.
/// The round ends with three sweeps per layer over the touched indices:
/// accumulator reads, writeback-buffer writes, then value writes.
struct AccessScript {
  std::uint64_t round = 0;
  std::vector<ScriptMessage> messages;
  std::vector<std::uint32_t> writeback_indices;

  bool empty() const { return messages.empty() && writeback_indices.empty(); }

  template <class F>
  void for_each_op(const ModelSpec& spec, F&& fn) const {
    std::uint64_t seq = 0;
    for (const auto& m : messages) {
      fn(AccessOp{Region::ingress_queue, 0, seq++, AccessKind::write});
      for (auto idx : *m.indices) {
        const auto layer = static_cast<std::uint32_t>(spec.layer_of(idx));
        const std::uint64_t local = idx - spec.layer_offset(layer);
        fn(AccessOp{Region::accumulator, layer, local, AccessKind::read});
        fn(AccessOp{Region::accumulator, layer, local, AccessKind::write});
      }
    }
    for_each_writeback_op(spec, fn);
  }

  template <class F>
  void for_each_writeback_op(const ModelSpec& spec, F&& fn) const {
    for (std::size_t lo = 0; lo < writeback_indices.size();) {
      const auto layer = static_cast<std::uint32_t>(spec.layer_of(writeback_indices[lo]));
      const std::size_t end = spec.layer_offset(layer) + spec.layers()[layer].element_count;
      std::size_t hi = lo;
      while (hi < writeback_indices.size() && writeback_indices[hi] < end) ++hi;
      for (auto [region, kind] : {std::pair{Region::accumulator, AccessKind::read},
                                  std::pair{Region::writeback, AccessKind::write},
                                  std::pair{Region::values, AccessKind::write}})
        for (std::size_t k = lo; k < hi; ++k)
          fn(AccessOp{region, layer, writeback_indices[k] - spec.layer_offset(layer), kind});
      lo = hi;
    }
  }

  std::vector<AccessOp> ops(const ModelSpec& spec) const {
    std::vector<AccessOp> out;
    for_each_op(spec, [&](const AccessOp& op) { out.push_back(op); });
    return out;
  }
};

/// Value payload of a message in bits, plus optional per-entry index metadata.
inline std::uint64_t payload_bits(const ModelSpec& spec, std::span<const std::uint32_t> indices,
                                  std::uint64_t metadata_bits_per_entry = 0) {
  std::uint64_t bits = 0;
  for (auto i : indices) bits += static_cast<std::uint64_t>(spec.precision_of(i)) + metadata_bits_per_entry;
  return bits;
}

inline void validate_update(const SparseUpdate& u, std::size_t total_params) {
  for (std::size_t i = 0; i < u.entries.size(); ++i) {
    if (u.entries[i].index >= total_params)
      throw InvalidArgument("update index " + std::to_string(u.entries[i].index) + " out of range");
    if (i > 0 && u.entries[i].index <= u.entries[i - 1].index)
      throw InvalidArgument("update indices must be strictly increasing");
    if (!std::isfinite(u.entries[i].value)) throw NumericError("update value is non-finite");
  }
}

/// Builds the access script for a list of (already validated) updates.
inline AccessScript build_access_script(const ModelSpec& spec, std::uint64_t round, std::span<const SparseUpdate> updates,
                                        std::uint64_t metadata_bits_per_entry = 0) {
  AccessScript script;
  script.round = round;
  std::vector<std::uint32_t> touched;
  for (const auto& u : updates) {
    auto idx = std::make_shared<std::vector<std::uint32_t>>(u.indices());
    touched.insert(touched.end(), idx->begin(), idx->end());
    script.messages.push_back({u.client_id, payload_bits(spec, *idx, metadata_bits_per_entry), std::move(idx)});
  }
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  script.writeback_indices = std::move(touched);
  return script;
}

/// Sparse aggregation: every touched index moves by the mean of the
/// contributions it received; untouched indices are unchanged. Updates are
/// consumed in ascending client order.
inline std::pair<ParameterStore, AccessScript> aggregate(const ParameterStore& server, std::vector<SparseUpdate> updates,
                                                         const ModelSpec& spec,
                                                         std::uint64_t metadata_bits_per_entry = 0) {
  require(server.size() == spec.total_params(), "server parameters do not match the model spec");
  if (updates.empty()) return {server, AccessScript{}};
  const std::uint64_t round = updates.front().round;
  for (const auto& u : updates) {
    if (u.round != round) throw InvalidArgument("round mismatch among aggregated updates");
    validate_update(u, spec.total_params());
  }
  std::stable_sort(updates.begin(), updates.end(),
                   [](const SparseUpdate& a, const SparseUpdate& b) { return a.client_id < b.client_id; });

  std::vector<double> accumulator(spec.total_params(), 0.0);
  std::vector<std::uint32_t> contributions(spec.total_params(), 0);
  for (const auto& u : updates) {
    for (const auto& e : u.entries) {
      accumulator[e.index] += e.value;
      ++contributions[e.index];
    }
  }
  ParameterStore next = server;
  AccessScript script = build_access_script(spec, round, updates, metadata_bits_per_entry);
  for (auto i : script.writeback_indices) next.values[i] += accumulator[i] / contributions[i];
  return {std::move(next), std::move(script)};
}

// ---------------------------------------------------------------------------
// Federation

struct FederationConfig {
  Modality modality = Modality::audio;
  std::size_t n_clients = 5;
  double sparsity = 0.01;
  double learning_rate = 0.05;
  std::size_t local_epochs = 1;
  std::size_t rounds_per_episode = 100;
  std::size_t shard_size = 16;
  std::size_t hidden = 36;
  std::size_t classes = 10;
  // Fraction of a client's labels drawn from its dominant class (non-IID shards).
  double label_skew = 0.7;
  double template_amplitude = 0.03;
  double sample_noise = 0.01;
  std::size_t source_length = 512;  // audio samples at the source rate
  std::size_t image_rows = 16;
  std::size_t image_cols = 16;
  double init_scale_hidden = 0.01;
  double init_scale_output = 0.3;
  std::uint64_t metadata_bits_per_entry = 0;
  ChannelConfig channel;

  /// Model input dimension after the capture channel.
  std::size_t input_dim() const {
    if (modality == Modality::image) return image_rows * image_cols;
    return static_cast<std::size_t>(std::llround(static_cast<double>(source_length) * channel.audio.target_rate /
                                                 channel.audio.source_rate));
  }

  /// Shape of the raw (pre-channel) client input and of perturbations.
  std::pair<std::size_t, std::size_t> raw_shape() const {
    if (modality == Modality::image) return {image_rows, image_cols};
    return {1, source_length};
  }

  MlpShape mlp_shape() const { return {input_dim(), hidden, classes}; }
};

struct Client {
  std::uint32_t id = 0;
  std::uint64_t shard_seed = 0;
  std::vector<double> clean;  // shard_size x raw input, row-major
  std::vector<std::uint32_t> labels;
};

struct FederationState {
  FederationConfig config;
  MlpShape shape;
  ModelSpec spec;
  ParameterStore global;
  std::vector<Client> clients;
  std::uint64_t seed = 0;
  std::uint64_t noise_seed = 0;  // capture-channel noise stream; re-seeded per episode
  std::uint64_t round = 0;

  std::size_t raw_size() const {
    const auto [r, c] = config.raw_shape();
    return r * c;
  }
  std::span<const double> clean_sample(std::size_t client, std::size_t sample) const {
    return std::span<const double>(clients.at(client).clean).subspan(sample * raw_size(), raw_size());
  }
};

namespace detail {

inline std::vector<std::vector<double>> class_templates(const FederationConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "templates"));
  const auto [rows, cols] = cfg.raw_shape();
  std::vector<std::vector<double>> out(cfg.classes, std::vector<double>(rows * cols, 0.0));
  for (auto& t : out) {
    if (cfg.modality == Modality::audio) {
      for (int h = 0; h < 3; ++h) {
        const double freq = rng.uniform(0.002, 0.08);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double amp = rng.uniform(0.5, 1.0);
        for (std::size_t n = 0; n < cols; ++n)
          t[n] += amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(n) + phase);
      }
    } else {
      for (int b = 0; b < 3; ++b) {
        const double cy = rng.uniform(0.0, static_cast<double>(rows));
        const double cx = rng.uniform(0.0, static_cast<double>(cols));
        const double s = rng.uniform(1.0, 0.25 * static_cast<double>(std::max(rows, cols)));
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) {
            const double dy = static_cast<double>(r) - cy, dx = static_cast<double>(c) - cx;
            t[r * cols + c] += std::exp(-(dx * dx + dy * dy) / (2.0 * s * s));
          }
      }
    }
    double peak = 0.0;
    for (double v : t) peak = std::max(peak, std::abs(v));
    for (double& v : t) v = peak > 0.0 ? v * cfg.template_amplitude / peak : 0.0;
  }
  return out;
}

}  // namespace detail

/// Deterministic federation: global parameters from `seed`, one synthetic
/// shard per client seeded by (seed, client_id).
inline FederationState init_federation(const FederationConfig& cfg, std::uint64_t seed) {
  if (cfg.n_clients == 0) throw InvalidArgument("federation needs at least one client");
  if (cfg.hidden == 0 || cfg.classes == 0 || cfg.input_dim() == 0) throw InvalidArgument("model is empty");
  require(cfg.shard_size > 0, "client shards must be non-empty");
  sparse_k(cfg.sparsity, 1);
  cfg.channel.validate();

  FederationState fed;
  fed.config = cfg;
  fed.shape = cfg.mlp_shape();
  fed.spec = mlp_model_spec(fed.shape);
  fed.seed = seed;
  fed.noise_seed = derive_seed(seed, "noise");
  fed.global = ParameterStore::zeros(fed.spec);

  Rng init(derive_seed(seed, "model-init"));
  const auto& sh = fed.shape;
  auto& theta = fed.global.values;
  for (std::size_t i = 0; i < sh.input_dim * sh.hidden; ++i) theta[i] = cfg.init_scale_hidden * init.normal();
  const std::size_t w2 = sh.input_dim * sh.hidden + sh.hidden;
  for (std::size_t i = 0; i < sh.hidden * sh.classes; ++i) theta[w2 + i] = cfg.init_scale_output * init.normal();

  const auto templates = detail::class_templates(cfg, seed);
  const std::size_t raw = fed.raw_size();
  for (std::uint32_t c = 0; c < cfg.n_clients; ++c) {
    Client client;
    client.id = c;
    client.shard_seed = derive_seed(derive_seed(seed, "shard"), c);
    Rng rng(client.shard_seed);
    const auto dominant = static_cast<std::uint32_t>(c % cfg.classes);
    client.clean.resize(cfg.shard_size * raw);
    client.labels.resize(cfg.shard_size);
    for (std::size_t s = 0; s < cfg.shard_size; ++s) {
      const auto label =
          rng.bernoulli(cfg.label_skew) ? dominant : static_cast<std::uint32_t>(rng.below(cfg.classes));
      client.labels[s] = label;
      for (std::size_t i = 0; i < raw; ++i) {
        double v = templates[label][i] + cfg.sample_noise * rng.normal();
        if (cfg.modality == Modality::image) v = std::clamp(v, 0.0, 1.0);
        client.clean[s * raw + i] = v;
      }
    }
    fed.clients.push_back(std::move(client));
  }
  return fed;
}

struct RoundResult {
  RoundRecord record;
  std::vector<SparseUpdate> updates;
  AccessScript script;
};

/// Passes one client's shard through the capture channel with perturbation `delta`.
inline std::vector<double> perturbed_batch(const FederationState& fed, std::size_t client, const Perturbation& delta) {
  const auto& cfg = fed.config;
  const std::size_t dim = fed.shape.input_dim;
  const auto [rows, cols] = cfg.raw_shape();
  std::vector<double> batch;
  batch.reserve(cfg.shard_size * dim);
  for (std::size_t s = 0; s < cfg.shard_size; ++s) {
    const auto x = fed.clean_sample(client, s);
    const std::uint64_t seed = derive_seed(fed.noise_seed, fed.round, client, s);
    if (cfg.modality == Modality::audio) {
      const auto y = emulate_audio_channel(x, delta, cfg.channel, seed);
      require(y.size() == dim, "channel output does not match model input");
      batch.insert(batch.end(), y.begin(), y.end());
    } else {
      Image img{rows, cols, std::vector<double>(x.begin(), x.end())};
      const auto y = emulate_image_channel(img, delta, cfg.channel, seed);
      batch.insert(batch.end(), y.pixels.begin(), y.pixels.end());
    }
  }
  return batch;
}

/// One communication round: every client trains on its perturbed shard,
/// sparsifies, and the server aggregates. `perturbations` holds one entry per
/// client, a single entry broadcast to all clients, or nothing (clean round).
/// U_t is the union of the clients' updated index sets.
inline RoundResult run_round(FederationState& fed, std::span<const Perturbation> perturbations) {
  const auto& cfg = fed.config;
  const auto [rows, cols] = cfg.raw_shape();
  const Perturbation zero{rows, cols, std::vector<double>(rows * cols, 0.0)};
  if (!perturbations.empty() && perturbations.size() != 1 && perturbations.size() != fed.clients.size())
    throw InvalidArgument("need one perturbation per client, a single broadcast perturbation, or none");

  RoundResult result;
  result.updates.reserve(fed.clients.size());
  const LocalTrainConfig train{cfg.learning_rate, cfg.local_epochs};
  for (std::size_t c = 0; c < fed.clients.size(); ++c) {
    const Perturbation& delta =
        perturbations.empty() ? zero : perturbations[perturbations.size() == 1 ? 0 : c];
    if (delta.rows != rows || delta.cols != cols) throw InvalidArgument("perturbation shape does not match client input");
    const auto batch = perturbed_batch(fed, c, delta);
    const SoftmaxMlpObjective objective(fed.shape, batch, fed.clients[c].labels);
    const auto dense = local_train(objective, fed.global, train);
    result.updates.push_back(sparsify_topk(dense, cfg.sparsity, fed.round, fed.clients[c].id));
  }

  auto [next, script] = aggregate(fed.global, result.updates, fed.spec, cfg.metadata_bits_per_entry);
  fed.global = std::move(next);
  result.script = std::move(script);
  result.record.round = fed.round;
  result.record.indices = result.script.writeback_indices;
  ++fed.round;
  return result;
}

}  // namespace hammersim
