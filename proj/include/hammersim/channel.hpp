#pragma once

// Perturbation decoding and physical capture-channel emulation.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "hammersim/common.hpp"

namespace hammersim {

enum class Modality { audio, image };

inline std::string to_string(Modality m) { return m == Modality::audio ? "audio" : "image"; }

inline Modality parse_modality(std::string_view s) {
  if (s == "audio") return Modality::audio;
  if (s == "image") return Modality::image;
  throw ConfigError("unknown modality '" + std::string(s) + "'");
}

/// Low-dimensional action emitted by the agent.
struct LatentAction {
  std::vector<double> z;
  Modality modality = Modality::audio;
};

/// Full-resolution additive perturbation, row-major. Audio uses rows == 1.
struct Perturbation {
  std::size_t rows = 1;
  std::size_t cols = 0;
  std::vector<double> delta;

  std::size_t size() const { return delta.size(); }
  double linf() const {
    double m = 0.0;
    for (double v : delta) m = std::max(m, std::abs(v));
    return m;
  }
};

/// Grayscale image, row-major, values nominally in [0, 1].
struct Image {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> pixels;

  double at(std::size_t r, std::size_t c) const { return pixels[r * cols + c]; }
  double& at(std::size_t r, std::size_t c) { return pixels[r * cols + c]; }
};

struct DecoderConfig {
  Modality modality = Modality::audio;
  std::size_t latent_dim = 32;
  // Output resolution: audio uses (1, samples), image uses (height, width).
  std::size_t out_rows = 1;
  std::size_t out_cols = 512;
};

struct AudioChannelConfig {
  double noise_std = 0.0;
  double source_rate = 16000.0;
  double target_rate = 16000.0;
};

struct ImageChannelConfig {
  std::size_t blur_radius = 0;
  double gamma = 1.0;
  std::uint64_t texture_seed = 0;
  double texture_strength = 0.0;
  double rescale_factor = 1.0;
};

struct ChannelConfig {
  AudioChannelConfig audio;
  ImageChannelConfig image;

  void validate() const {
    if (!(audio.noise_std >= 0.0)) throw ConfigError("channel noise_std must be >= 0");
    if (!(audio.source_rate > 0.0) || !(audio.target_rate > 0.0)) throw ConfigError("channel sample rates must be positive");
    if (!(image.gamma > 0.0)) throw ConfigError("channel gamma must be positive");
    if (!(image.texture_strength >= 0.0)) throw ConfigError("channel texture_strength must be >= 0");
    if (!(image.rescale_factor > 0.0)) throw ConfigError("channel rescale_factor must be positive");
  }
};

/// Fixed, untrained decoder: nearest-neighbour grid upsampling (image) or a
/// sample-and-hold over equal segments (audio). Linear in z; output unclipped.
inline Perturbation decode_latent(const LatentAction& action, const DecoderConfig& cfg) {
  if (action.z.size() != cfg.latent_dim)
    throw InvalidArgument("latent dimension " + std::to_string(action.z.size()) + " does not match decoder " +
                          std::to_string(cfg.latent_dim));
  if (action.modality != cfg.modality) throw InvalidArgument("latent modality does not match decoder");
  require(cfg.out_cols > 0 && cfg.out_rows > 0, "decoder output must be non-empty");

  Perturbation out;
  out.rows = cfg.out_rows;
  out.cols = cfg.out_cols;
  out.delta.assign(cfg.out_rows * cfg.out_cols, 0.0);

  if (cfg.modality == Modality::audio) {
    require(cfg.out_rows == 1, "audio decoder output must have one row");
    const std::size_t segments = cfg.latent_dim;
    for (std::size_t n = 0; n < cfg.out_cols; ++n) out.delta[n] = action.z[n * segments / cfg.out_cols];
    return out;
  }

  const auto grid = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(cfg.latent_dim))));
  if (grid * grid != cfg.latent_dim) throw InvalidArgument("image latent dimension must be a square grid");
  for (std::size_t r = 0; r < cfg.out_rows; ++r) {
    const std::size_t gr = r * grid / cfg.out_rows;
    for (std::size_t c = 0; c < cfg.out_cols; ++c) {
      const std::size_t gc = c * grid / cfg.out_cols;
      out.delta[r * cfg.out_cols + c] = action.z[gr * grid + gc];
    }
  }
  return out;
}

/// Elementwise clamp to [-eps, eps]. Idempotent.
inline Perturbation clip_linf(Perturbation p, double eps) {
  require(eps > 0.0, "clip budget must be positive");
  for (double& v : p.delta) v = std::clamp(v, -eps, eps);
  return p;
}

/// Linear-interpolation resampler; output length round(n * target / source).
inline std::vector<double> resample_linear(std::span<const double> x, double source_rate, double target_rate) {
  require(source_rate > 0.0 && target_rate > 0.0, "sample rates must be positive");
  if (x.empty()) return {};
  if (source_rate == target_rate) return {x.begin(), x.end()};
  const auto out_len =
      static_cast<std::size_t>(std::llround(static_cast<double>(x.size()) * target_rate / source_rate));
  std::vector<double> y(out_len);
  const double step = source_rate / target_rate;
  for (std::size_t j = 0; j < out_len; ++j) {
    const double pos = static_cast<double>(j) * step;
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    if (i + 1 >= x.size()) {
      y[j] = x.back();
    } else if (frac == 0.0) {
      y[j] = x[i];
    } else {
      y[j] = x[i] * (1.0 - frac) + x[i + 1] * frac;
    }
  }
  return y;
}

/// resample(x + delta + N(0, noise_std^2), source -> target).
inline std::vector<double> emulate_audio_channel(std::span<const double> x, const Perturbation& delta,
                                                 const ChannelConfig& cfg, std::uint64_t seed) {
  if (delta.size() != x.size())
    throw InvalidArgument("waveform length " + std::to_string(x.size()) + " does not match perturbation length " +
                          std::to_string(delta.size()));
  std::vector<double> mixed(x.begin(), x.end());
  for (std::size_t i = 0; i < mixed.size(); ++i) mixed[i] += delta.delta[i];
  if (cfg.audio.noise_std > 0.0) {
    Rng rng(seed);
    for (double& v : mixed) v += cfg.audio.noise_std * rng.normal();
  }
  return resample_linear(mixed, cfg.audio.source_rate, cfg.audio.target_rate);
}

namespace detail {

inline Image box_blur(const Image& in, std::size_t radius) {
  if (radius == 0) return in;
  Image out = in;
  const auto r = static_cast<std::ptrdiff_t>(radius);
  const auto rows = static_cast<std::ptrdiff_t>(in.rows);
  const auto cols = static_cast<std::ptrdiff_t>(in.cols);
  for (std::ptrdiff_t y = 0; y < rows; ++y) {
    for (std::ptrdiff_t x = 0; x < cols; ++x) {
      double sum = 0.0;
      int count = 0;
      for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
        for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
          const std::ptrdiff_t yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= rows || xx < 0 || xx >= cols) continue;
          sum += in.pixels[static_cast<std::size_t>(yy * cols + xx)];
          ++count;
        }
      }
      out.pixels[static_cast<std::size_t>(y * cols + x)] = sum / count;
    }
  }
  return out;
}

inline Image resize_bilinear(const Image& in, std::size_t rows, std::size_t cols) {
  Image out{rows, cols, std::vector<double>(rows * cols)};
  auto sample = [&](double pos, std::size_t n, std::size_t& i0, double& frac) {
    pos = std::clamp(pos, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<std::size_t>(pos);
    if (i0 + 1 >= n) {
      i0 = n - 1;
      frac = 0.0;
    } else {
      frac = pos - static_cast<double>(i0);
    }
  };
  for (std::size_t r = 0; r < rows; ++r) {
    // Align pixel centres.
    const double sy = (static_cast<double>(r) + 0.5) * static_cast<double>(in.rows) / static_cast<double>(rows) - 0.5;
    std::size_t y0;
    double fy;
    sample(sy, in.rows, y0, fy);
    const std::size_t y1 = std::min(y0 + 1, in.rows - 1);
    for (std::size_t c = 0; c < cols; ++c) {
      const double sx = (static_cast<double>(c) + 0.5) * static_cast<double>(in.cols) / static_cast<double>(cols) - 0.5;
      std::size_t x0;
      double fx;
      sample(sx, in.cols, x0, fx);
      const std::size_t x1 = std::min(x0 + 1, in.cols - 1);
      const double top = in.at(y0, x0) * (1.0 - fx) + in.at(y0, x1) * fx;
      const double bot = in.at(y1, x0) * (1.0 - fx) + in.at(y1, x1) * fx;
      out.at(r, c) = top * (1.0 - fy) + bot * fy;
    }
  }
  return out;
}

}  // namespace detail

/// Print-and-recapture emulation. Stage order: add delta, clamp, box blur
/// (ink bleeding), paper texture, gamma, rescale round trip, clamp.
inline Image emulate_image_channel(const Image& x, const Perturbation& delta, const ChannelConfig& cfg,
                                   std::uint64_t seed) {
  if (delta.rows != x.rows || delta.cols != x.cols || x.pixels.size() != x.rows * x.cols)
    throw InvalidArgument("image and perturbation shapes differ");
  for (double v : x.pixels)
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("image pixel outside [0, 1]");

  const auto& ic = cfg.image;
  Image img = x;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = std::clamp(img.pixels[i] + delta.delta[i], 0.0, 1.0);

  img = detail::box_blur(img, ic.blur_radius);

  if (ic.texture_strength > 0.0) {
    Rng rng(derive_seed(ic.texture_seed, seed));
    for (double& v : img.pixels) v *= 1.0 + ic.texture_strength * rng.uniform(-1.0, 1.0);
  }

  if (ic.gamma != 1.0) {
    for (double& v : img.pixels) v = std::pow(std::max(v, 0.0), ic.gamma);
  }

  if (ic.rescale_factor != 1.0) {
    const auto rows = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(x.rows * ic.rescale_factor)));
    const auto cols = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(x.cols * ic.rescale_factor)));
    img = detail::resize_bilinear(detail::resize_bilinear(img, rows, cols), x.rows, x.cols);
  }

  for (double& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
  return img;
}

// ---------------------------------------------------------------------------
// STFT

struct Spectrogram {
  std::size_t frame_len = 0;
  std::size_t hop = 0;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<std::complex<double>> data;  // frames x bins

  std::complex<double> at(std::size_t f, std::size_t b) const { return data[f * bins + b]; }
};

namespace detail {

// FFTW planning is not thread-safe; plans are cached per length behind a lock
// and executed through the new-array interface, which is.
class FftPlanCache {
 public:
  static FftPlanCache& instance() {
    static FftPlanCache cache;
    return cache;
  }

  fftw_plan plan_for(std::size_t n) {
    std::lock_guard lock(mu_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
    fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(n, p);
    return p;
  }

  ~FftPlanCache() {
    for (auto& [n, p] : plans_) fftw_destroy_plan(p);
  }

 private:
  std::mutex mu_;
  std::map<std::size_t, fftw_plan> plans_;
};

}  // namespace detail

/// Periodic Hann window.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n)));
  return w;
}

/// Hann-windowed STFT without padding: frames = 1 + (len - frame_len) / hop.
inline Spectrogram stft(std::span<const double> x, std::size_t frame_len = 256, std::size_t hop = 128) {
  if (frame_len == 0 || !std::has_single_bit(frame_len)) throw InvalidArgument("STFT frame length must be a power of two");
  if (hop == 0 || hop > frame_len) throw InvalidArgument("STFT hop must be in (0, frame_len]");
  if (x.size() < frame_len)
    throw InvalidArgument("signal of " + std::to_string(x.size()) + " samples is shorter than one STFT frame");

  Spectrogram s;
  s.frame_len = frame_len;
  s.hop = hop;
  s.frames = 1 + (x.size() - frame_len) / hop;
  s.bins = frame_len / 2 + 1;
  s.data.resize(s.frames * s.bins);

  const auto window = hann_window(frame_len);
  fftw_plan plan = detail::FftPlanCache::instance().plan_for(frame_len);
  std::unique_ptr<double, decltype(&fftw_free)> in(fftw_alloc_real(frame_len), &fftw_free);
  std::unique_ptr<fftw_complex, decltype(&fftw_free)> out(fftw_alloc_complex(s.bins), &fftw_free);

  for (std::size_t f = 0; f < s.frames; ++f) {
    for (std::size_t i = 0; i < frame_len; ++i) in.get()[i] = x[f * hop + i] * window[i];
    fftw_execute_dft_r2c(plan, in.get(), out.get());
    for (std::size_t b = 0; b < s.bins; ++b) s.data[f * s.bins + b] = {out.get()[b][0], out.get()[b][1]};
  }
  return s;
}

// ---------------------------------------------------------------------------
// Perturbation dumps: flat little-endian float32, row-major.

inline std::string encode_perturbation(const Perturbation& p) {
  std::string out;
  out.reserve(p.delta.size() * 4);
  for (double v : p.delta) append_le(out, static_cast<float>(v));
  return out;
}

inline void write_perturbation(const std::string& path, const Perturbation& p) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  const auto bytes = encode_perturbation(p);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Perturbation decode_perturbation(std::string_view bytes, std::size_t rows, std::size_t cols) {
  if (bytes.size() != rows * cols * 4) throw ConfigError("perturbation dump size does not match shape");
  Perturbation p{rows, cols, std::vector<double>(rows * cols)};
  std::size_t pos = 0;
  for (double& v : p.delta) v = read_le<float>(bytes, pos);
  return p;
}

}  // namespace hammersim
