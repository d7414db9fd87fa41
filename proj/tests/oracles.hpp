#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. They favour the most literal formulation over speed.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <vector>

#include "hammersim/hammersim.hpp"

namespace oracle {

using namespace hammersim;

// ---------------------------------------------------------------------------
// Metrics

/// Smallest span over every subset holding at least ceil(0.9 k) of the indices.
inline std::uint64_t cd_span_exhaustive(const std::vector<std::uint32_t>& idx) {
  std::vector<std::uint32_t> s(idx);
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  const std::size_t k = s.size();
  // ceil(0.9 k) in integer arithmetic.
  const std::size_t m = std::max<std::size_t>(1, (9 * k + 9) / 10);
  std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
  for (std::uint32_t mask = 1; mask < (1u << k); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) < m) continue;
    std::uint32_t lo = UINT32_MAX, hi = 0;
    for (std::size_t b = 0; b < k; ++b)
      if (mask & (1u << b)) {
        lo = std::min(lo, s[b]);
        hi = std::max(hi, s[b]);
      }
    best = std::min<std::uint64_t>(best, hi - lo + 1ull);
  }
  return best;
}

/// Min-cost perfect assignment (Hungarian method, O(n^3)) on a square cost matrix.
inline double assignment_cost(const std::vector<std::vector<double>>& c) {
  const std::size_t n = c.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) total += c[p[j] - 1][j - 1];
  return total;
}

/// Optimal transport between uniform distributions on {a_i / M} and {b_j / M}.
/// Each point is split into unit masses (|b| units per a-point, |a| per
/// b-point) and the units are matched by min-cost assignment.
inline double emd_transport(std::vector<std::uint32_t> a, std::vector<std::uint32_t> b, std::size_t M) {
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  std::vector<double> ua, ub;
  for (auto x : a)
    for (std::size_t r = 0; r < b.size(); ++r) ua.push_back(static_cast<double>(x) / static_cast<double>(M));
  for (auto x : b)
    for (std::size_t r = 0; r < a.size(); ++r) ub.push_back(static_cast<double>(x) / static_cast<double>(M));
  std::vector<std::vector<double>> cost(ua.size(), std::vector<double>(ub.size()));
  for (std::size_t i = 0; i < ua.size(); ++i)
    for (std::size_t j = 0; j < ub.size(); ++j) cost[i][j] = std::abs(ua[i] - ub[j]);
  return assignment_cost(cost) / static_cast<double>(ua.size());
}

/// Equal-size sets: minimum over all matchings by permutation.
inline double emd_permutations(std::vector<std::uint32_t> a, std::vector<std::uint32_t> b, std::size_t M) {
  std::sort(b.begin(), b.end());
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      s += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])) / static_cast<double>(M);
    best = std::min(best, s / static_cast<double>(a.size()));
  } while (std::next_permutation(b.begin(), b.end()));
  return best;
}

// ---------------------------------------------------------------------------
// Signal processing

/// Hann-windowed frames transformed by a direct O(n^2) Fourier sum.
inline std::vector<std::vector<std::complex<double>>> stft_direct(const std::vector<double>& x, std::size_t n,
                                                                  std::size_t hop) {
  std::vector<std::vector<std::complex<double>>> out;
  for (std::size_t start = 0; start + n <= x.size(); start += hop) {
    std::vector<std::complex<double>> frame(n / 2 + 1);
    for (std::size_t k = 0; k <= n / 2; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(n));
        const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n);
        acc += x[start + t] * w * std::complex<double>(std::cos(ang), std::sin(ang));
      }
      frame[k] = acc;
    }
    out.push_back(frame);
  }
  return out;
}

// ---------------------------------------------------------------------------
// DRAM: history recount oracle
//
// Keeps the full ACT history and the refresh instants of every row, and
// re-derives each quantity by counting over that history whenever it is
// needed. Semantics: an ACT happens when a bank's open row changes; REF n at
// n * tREFI refreshes a fixed slice of every bank plus the neighbours of the
// top-C rows (by ACTs so far in the current refresh window, ties to the lower
// row); a victim's exposure per side is the neighbour's ACT count since the
// victim's last refresh; a victim flips at most once between refreshes.

struct ToyGeometry {
  std::uint32_t banks = 4;
  std::uint32_t rows = 64;
  std::uint32_t row_bytes = 64;
};

struct Act {
  Picoseconds t;
  std::uint32_t bank, row;
};

struct FlipKey {
  std::uint32_t bank, row;
  Picoseconds t;
  HammerMode mode;
  std::uint64_t effective;
  std::uint8_t bits;
  friend auto operator<=>(const FlipKey&, const FlipKey&) = default;
};

inline const ThresholdEntry& nearest_entry(const ThresholdTable& table, std::uint8_t v, std::uint8_t a, HammerMode m) {
  const ThresholdEntry* best = nullptr;
  int best_d = 1000;
  for (const auto& e : table.entries()) {
    if (e.mode != m) continue;
    int d = 0;
    for (int b = 0; b < 8; ++b) d += ((e.victim >> b) & 1) != ((v >> b) & 1);
    for (int b = 0; b < 8; ++b) d += ((e.aggressor >> b) & 1) != ((a >> b) & 1);
    if (d < best_d) {
      best_d = d;
      best = &e;
    }
  }
  return *best;
}

class RecountOracle {
 public:
  RecountOracle(ToyGeometry g, Picoseconds window, std::uint32_t ref_commands, TrrConfig trr, ThresholdTable table,
                const VulnerabilityMap& vmap, const DataContents& contents)
      : g_(g), window_(window), refs_(ref_commands), trefi_(window / ref_commands), trr_(trr), table_(std::move(table)),
        vmap_(vmap), contents_(contents), open_(g.banks, -1), last_refresh_(g.banks * g.rows, 0),
        flipped_since_(g.banks * g.rows, false) {}

  void access(Picoseconds t, std::uint64_t paddr, std::uint32_t size) {
    issue_refs_up_to(t);
    for (std::uint64_t a = paddr; a < paddr + size; a = (a / g_.row_bytes + 1) * g_.row_bytes) {
      const std::uint64_t line = a / g_.row_bytes;
      const auto bank = static_cast<std::uint32_t>(line % g_.banks);
      const auto row = static_cast<std::uint32_t>(line / g_.banks);
      if (open_[bank] == static_cast<std::int64_t>(row)) continue;
      open_[bank] = row;
      acts_.push_back({t, bank, row});
      if (row > 0) check(bank, row - 1, t);
      if (row + 1 < g_.rows) check(bank, row + 1, t);
    }
  }

  std::vector<FlipKey> flips() const { return flips_; }
  std::uint64_t act_count() const { return acts_.size(); }

 private:
  // Rows the sampler tracks given the first `upto` ACTs, counting only those
  // inside the refresh window that contains `t`.
  std::vector<std::uint32_t> tracked(std::uint32_t bank, Picoseconds t, std::size_t upto) const {
    if (trr_.capacity == 0) return {};
    const Picoseconds period_start = t / window_ * window_;
    std::map<std::uint32_t, std::uint64_t> count;
    for (std::size_t i = 0; i < upto; ++i)
      if (acts_[i].bank == bank && acts_[i].t >= period_start) ++count[acts_[i].row];
    std::vector<std::pair<std::uint64_t, std::uint32_t>> v;
    for (auto [r, c] : count) v.push_back({c, r});
    std::sort(v.begin(), v.end(), [](auto x, auto y) { return x.first != y.first ? x.first > y.first : x.second < y.second; });
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < v.size() && i < trr_.capacity; ++i) out.push_back(v[i].second);
    return out;
  }

  void refresh(std::uint32_t bank, std::uint32_t row, Picoseconds t) {
    last_refresh_[bank * g_.rows + row] = t;
    flipped_since_[bank * g_.rows + row] = false;
  }

  void issue_refs_up_to(Picoseconds t) {
    while ((done_ + 1) * trefi_ <= t) {
      ++done_;
      const Picoseconds at = done_ * trefi_;
      const std::uint64_t slice = (done_ - 1) % refs_;
      for (std::uint32_t b = 0; b < g_.banks; ++b) {
        for (std::uint32_t r = 0; r < g_.rows; ++r)
          if (static_cast<std::uint64_t>(r) * refs_ / g_.rows == slice) refresh(b, r, at);
        for (auto tr : tracked(b, at, acts_.size()))
          for (std::uint32_t d = 1; d <= trr_.radius; ++d) {
            if (tr >= d) refresh(b, tr - d, at);
            if (tr + d < g_.rows) refresh(b, tr + d, at);
          }
      }
    }
  }

  // Exposure: ACTs of `row` since the victim's last refresh.
  std::uint64_t exposure(std::uint32_t bank, std::uint32_t victim, std::uint32_t row) const {
    const Picoseconds since = last_refresh_[bank * g_.rows + victim];
    std::uint64_t n = 0;
    for (const auto& a : acts_)
      if (a.bank == bank && a.row == row && a.t >= since) ++n;
    return n;
  }

  void check(std::uint32_t bank, std::uint32_t v, Picoseconds t) {
    const std::size_t i = bank * g_.rows + v;
    if (flipped_since_[i] || !vmap_.vulnerable(bank, v)) return;
    for (auto tr : tracked(bank, t, acts_.size())) {
      const std::uint32_t d = tr > v ? tr - v : v - tr;
      if (d >= 1 && d <= trr_.radius) return;
    }
    const std::uint64_t lo = v > 0 ? exposure(bank, v, v - 1) : 0;
    const std::uint64_t hi = v + 1 < g_.rows ? exposure(bank, v, v + 1) : 0;
    const std::uint32_t agg = hi > lo || v == 0 ? v + 1 : v - 1;
    const std::uint8_t vf = contents_.fill(bank, v), af = contents_.fill(bank, agg);
    const double mult = vmap_.multiplier(bank, v);
    const double ts = static_cast<double>(nearest_entry(table_, vf, af, HammerMode::single_sided).count) * mult;
    const double td = static_cast<double>(nearest_entry(table_, vf, af, HammerMode::double_sided).count) * mult;
    FlipKey f{bank, v, t, HammerMode::single_sided, std::max(lo, hi), 0};
    double threshold = ts;
    if (static_cast<double>(lo) >= ts / 2.0 && static_cast<double>(hi) >= ts / 2.0) {
      f.mode = HammerMode::double_sided;
      f.effective = lo + hi;
      threshold = 2.0 * td;
    }
    if (static_cast<double>(f.effective) < threshold) return;
    f.bits = static_cast<std::uint8_t>(vf != af ? vf ^ af : (vf ? vf : 0xFF));
    flips_.push_back(f);
    flipped_since_[i] = true;
  }

  ToyGeometry g_;
  Picoseconds window_;
  std::uint64_t refs_;
  Picoseconds trefi_;
  TrrConfig trr_;
  ThresholdTable table_;
  const VulnerabilityMap& vmap_;
  const DataContents& contents_;
  std::vector<std::int64_t> open_;
  std::vector<Act> acts_;
  std::vector<Picoseconds> last_refresh_;
  std::vector<bool> flipped_since_;
  std::vector<FlipKey> flips_;
  std::uint64_t done_ = 0;
};

inline std::vector<FlipKey> flip_keys(const BitFlipReport& r) {
  std::vector<FlipKey> out;
  for (const auto& f : r.flips) out.push_back({f.bank, f.row, f.time_ps, f.mode, f.effective_count, f.bits});
  return out;
}

struct ToyCase {
  SimulationConfig cfg;
  ThresholdTable table;
  std::uint64_t seed = 0;
  DataContents contents;
  std::vector<AccessEvent> trace;
};

/// Random toy workload: a handful of hot rows per bank, random gaps that cross
/// REF ticks and window boundaries, some accesses spanning two rows.
inline ToyCase random_toy_case(std::uint64_t seed) {
  Rng rng(seed);
  ToyCase c;
  c.seed = seed;
  c.cfg.mapping = DramMapping{4, 64, 64, 0};
  c.cfg.dram.refresh_s = 64e-6;
  c.cfg.dram.ref_commands = 16 << rng.below(3);  // 16, 32 or 64 REFs per window
  c.cfg.dram.trc_s = 49e-9;
  c.cfg.trr = TrrConfig{static_cast<std::uint32_t>(std::vector<int>{0, 0, 1, 2, 4}[rng.below(5)]),
                        static_cast<std::uint32_t>(1 + rng.below(2))};
  c.cfg.vulnerable_fraction = rng.uniform(0.6, 1.0);
  c.cfg.multiplier_jitter = rng.bernoulli(0.5) ? 0.0 : 0.3;
  c.cfg.enforce_act_cap = false;
  const std::uint8_t pats[4][2] = {{0xFF, 0x00}, {0x00, 0xFF}, {0x55, 0x55}, {0xAA, 0xAA}};
  std::vector<ThresholdEntry> entries;
  for (auto& p : pats) {
    const std::uint64_t single = 6 + rng.below(10);
    const std::uint64_t dbl = 3 + rng.below(single - 2);
    entries.push_back({p[0], p[1], HammerMode::single_sided, single});
    entries.push_back({p[0], p[1], HammerMode::double_sided, dbl});
  }
  c.table = ThresholdTable(entries);
  const std::uint8_t fills[] = {0xFF, 0x00, 0x55, 0xAA, 0x0F};
  c.contents = DataContents(fills[rng.below(5)]);
  for (int k = 0; k < 40; ++k)
    c.contents.set_fill(static_cast<std::uint32_t>(rng.below(4)), static_cast<std::uint32_t>(rng.below(64)),
                        fills[rng.below(5)]);

  std::vector<std::pair<std::uint32_t, std::uint32_t>> hot;
  const std::size_t n_hot = 2 + rng.below(6);
  for (std::size_t h = 0; h < n_hot; ++h)
    hot.push_back({static_cast<std::uint32_t>(rng.below(4)), static_cast<std::uint32_t>(rng.below(64))});
  const std::size_t n = 100 + rng.below(300);
  Picoseconds t = 0;
  for (std::size_t e = 0; e < n; ++e) {
    t += rng.below(400'000);
    std::uint32_t bank, row;
    if (rng.bernoulli(0.8)) {
      std::tie(bank, row) = hot[rng.below(hot.size())];
    } else {
      bank = static_cast<std::uint32_t>(rng.below(4));
      row = static_cast<std::uint32_t>(rng.below(64));
    }
    const std::uint64_t base = (static_cast<std::uint64_t>(row) * 4 + bank) * 64;
    const std::uint32_t col = static_cast<std::uint32_t>(rng.below(64));
    std::uint32_t size = 1 + static_cast<std::uint32_t>(rng.below(8));
    if (rng.bernoulli(0.1)) size += 64;  // spills into the next row line
    const std::uint64_t paddr = base + col;
    if (paddr + size > c.cfg.mapping.capacity()) size = static_cast<std::uint32_t>(c.cfg.mapping.capacity() - paddr);
    c.trace.push_back({t, paddr, rng.bernoulli(0.5) ? AccessKind::read : AccessKind::write, size});
  }
  return c;
}

inline std::vector<FlipKey> run_oracle(const ToyCase& c) {
  const VulnerabilityMap vmap(c.seed, c.cfg.vulnerable_fraction, c.cfg.multiplier_jitter);
  RecountOracle o(ToyGeometry{}, c.cfg.dram.refresh_ps(), c.cfg.dram.ref_commands, c.cfg.trr, c.table, vmap,
                  c.contents);
  for (const auto& e : c.trace) o.access(e.time_ps, e.paddr, e.size);
  return o.flips();
}

// ---------------------------------------------------------------------------
// Finite differences

/// Central-difference gradient of f over every coordinate of x.
template <class F>
std::vector<double> numeric_gradient(F&& f, std::vector<double>& x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double dn = f();
    x[i] = keep;
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

/// |a - b| / max(|a|, |b|), or the absolute gap when both are below `floor`.
inline double relative_error(double a, double b, double floor = 1e-7) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale < floor ? std::abs(a - b) : std::abs(a - b) / scale;
}

/// Random transitions for a policy with `features` pooled inputs and a mask of
/// `mask_len`; old log-probs sit at log-ratio offsets in [-spread, spread].
inline std::vector<Transition> random_batch(const PolicyParams& p, std::size_t n, std::size_t features,
                                            double spread, Rng& rng) {
  const std::size_t mask_len = p.obs_dim() - features;
  std::vector<Transition> out;
  for (std::size_t s = 0; s < n; ++s) {
    Transition t;
    for (std::size_t k = 0; k < features; ++k) t.obs.features.push_back(rng.normal());
    t.obs.mask_len = mask_len;
    for (std::uint32_t i = 0; i < mask_len; ++i)
      if (rng.bernoulli(0.4)) t.obs.active.push_back(i);
    const auto out_now = policy_forward(t.obs, p);
    t.action = sample_action(out_now, rng);
    t.log_prob = gaussian_log_prob(t.action, out_now.mean, out_now.log_std) + rng.uniform(-spread, spread);
    t.reward = rng.normal();
    t.value = out_now.value;
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hand-built hammer traces

/// `passes` sweeps over `rows` of one bank, one 4-byte access every `spacing`.
inline std::vector<AccessEvent> cycle_rows(const DramMapping& m, std::uint32_t bank,
                                           const std::vector<std::uint32_t>& rows, std::uint64_t passes,
                                           Picoseconds spacing = 49'000, Picoseconds start = 0) {
  std::vector<AccessEvent> out;
  out.reserve(rows.size() * passes);
  Picoseconds t = start;
  for (std::uint64_t p = 0; p < passes; ++p)
    for (auto r : rows) {
      out.push_back({t, dram_to_physical({bank, r, 0}, m), AccessKind::read, 4});
      t += spacing;
    }
  return out;
}

}  // namespace oracle
