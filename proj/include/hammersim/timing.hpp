#pragma once

// Memory bandwidth and refresh timing. Times are integer picoseconds.

#include <cmath>
#include <cstdint>

#include "hammersim/common.hpp"

namespace hammersim {

using Picoseconds = std::uint64_t;
inline constexpr Picoseconds kPsPerSecond = 1'000'000'000'000ull;

/// BW = data_rate * 2^20 * bit_width / 8 bytes/s. The binary mega reading of
/// "MT/s" is the one under which the published H_max table reproduces.
struct BandwidthModel {
  std::uint64_t data_rate_mts = 2400;
  std::uint32_t bit_width = 64;

  void validate() const {
    if (data_rate_mts == 0 || bit_width == 0) throw ConfigError("data rate and bit width must be positive");
  }

  std::uint64_t bits_per_second() const { return data_rate_mts * (1ull << 20) * bit_width; }
  double bytes_per_second() const { return static_cast<double>(bits_per_second()) / 8.0; }

  /// Bytes transferable in `window_ps`, exact as a real number.
  double window_bytes(Picoseconds window_ps) const {
    return static_cast<double>(static_cast<long double>(bits_per_second()) * window_ps / kPsPerSecond / 8.0L);
  }

  /// floor(bits / bits_per_second) in picoseconds.
  Picoseconds transfer_ps(std::uint64_t bits) const {
    const unsigned __int128 num = static_cast<unsigned __int128>(bits) * kPsPerSecond;
    return static_cast<Picoseconds>(num / bits_per_second());
  }
};

inline Picoseconds seconds_to_ps(double s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("duration must be positive");
  return static_cast<Picoseconds>(std::llround(s * static_cast<double>(kPsPerSecond)));
}

}  // namespace hammersim
