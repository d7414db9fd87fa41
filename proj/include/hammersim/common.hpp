#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hammersim {

inline constexpr std::string_view kVersion = "0.3.0";

/// Base error for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or malformed input file (CLI exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Violated operation precondition (bad argument, shape mismatch).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Numerical failure at run time (non-finite loss, gradient, output).
class NumericError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

// ---------------------------------------------------------------------------
// Hashing and seed derivation

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

inline std::uint64_t fnv1a(std::string_view text, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : text) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Named sub-seed of a root seed, so components can be re-seeded independently.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view name) {
  return splitmix64(root ^ fnv1a(name));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a) { return splitmix64(root ^ splitmix64(a + 1)); }

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(root, a), b);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return derive_seed(derive_seed(root, a, b), c);
}

// ---------------------------------------------------------------------------
// Seeded random stream.
//
// A splitmix64 stream with hand-written transforms, so sequences are identical
// across standard libraries (std::*_distribution output is implementation
// defined).

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Little-endian binary helpers

template <class T>
T to_little_endian(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&v, bytes, sizeof(T));
    return v;
  }
}

template <class T>
void append_le(std::string& out, T v) {
  v = to_little_endian(v);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  out.append(bytes, sizeof(T));
}

template <class T>
T read_le(std::string_view in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw ConfigError("truncated binary record");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return to_little_endian(v);
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// k = ceil(p * n), robust to representation error in p (0.001 * 8.7e6 must be 8700).
inline std::size_t ceil_fraction(double p, std::size_t n) {
  const double x = p * static_cast<double>(n);
  const double r = std::round(x);
  const double tol = 1e-9 * std::max(1.0, std::abs(x));
  const double k = std::abs(x - r) <= tol ? r : std::ceil(x);
  return static_cast<std::size_t>(k);
}

/// floor(x) for a non-negative product that should be integral when exact (0.5 * 4 must be 2).
inline std::uint64_t floor_product(double a, double b) {
  const double x = a * b;
  const double r = std::round(x);
  const double tol = 1e-9 * std::max(1.0, std::abs(x));
  return static_cast<std::uint64_t>(std::abs(x - r) <= tol ? r : std::floor(x));
}

}  // namespace hammersim
