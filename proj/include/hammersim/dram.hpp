#pragma once

// DRAM row-buffer, refresh, TRR and Rowhammer flip model driven by physical
// access traces.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hammersim/common.hpp"
#include "hammersim/memmap.hpp"
#include "hammersim/timing.hpp"

namespace hammersim {

/// A trace the DRAM model refuses: out of order, out of range, or above the ACT-rate cap.
class TraceError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

struct DramConfig {
  double refresh_s = 0.064;
  std::uint32_t ref_commands = 8192;
  double trc_s = 49e-9;
  BandwidthModel bandwidth;

  Picoseconds refresh_ps() const { return seconds_to_ps(refresh_s); }
  Picoseconds trc_ps() const { return seconds_to_ps(trc_s); }

  Picoseconds trefi_ps() const {
    if (ref_commands == 0) throw ConfigError("refresh command count must be positive");
    const Picoseconds w = refresh_ps();
    if (w % ref_commands != 0) throw ConfigError("refresh window is not a whole number of picosecond REF intervals");
    return w / ref_commands;
  }

  /// Most ACTs one bank can issue in a refresh window: floor(window / tRC).
  std::uint64_t act_cap() const { return refresh_ps() / trc_ps(); }

  void validate() const {
    trefi_ps();
    act_cap();
    bandwidth.validate();
  }
};

enum class HammerMode : std::uint8_t { single_sided, double_sided };

inline std::string to_string(HammerMode m) { return m == HammerMode::single_sided ? "single" : "double"; }

struct ThresholdEntry {
  std::uint8_t victim = 0;
  std::uint8_t aggressor = 0;
  HammerMode mode = HammerMode::single_sided;
  std::uint64_t count = 0;

  friend bool operator==(const ThresholdEntry&, const ThresholdEntry&) = default;
};

/// Activation thresholds per (victim fill, aggressor fill, mode). Double-sided
/// counts are per aggressor row.
class ThresholdTable {
 public:
  ThresholdTable() = default;

  explicit ThresholdTable(std::vector<ThresholdEntry> entries) : entries_(std::move(entries)) {
    if (entries_.empty()) throw ConfigError("threshold table is empty");
    for (const auto& e : entries_) {
      if (e.count == 0) throw ConfigError("threshold counts must be positive");
      for (const auto& o : entries_) {
        if (&o == &e || o.victim != e.victim || o.aggressor != e.aggressor) continue;
        if (o.mode == e.mode) throw ConfigError("duplicate threshold entry");
        if (e.mode == HammerMode::double_sided && e.count > o.count)
          throw ConfigError("double-sided threshold exceeds the single-sided one for the same patterns");
      }
    }
    for (const auto& e : entries_) {
      bool both = false;
      for (const auto& o : entries_)
        both |= o.victim == e.victim && o.aggressor == e.aggressor && o.mode != e.mode;
      if (!both) throw ConfigError("every data pattern needs single and double thresholds");
    }
  }

  /// Measured thresholds for four fill patterns.
  static ThresholdTable defaults() {
    using M = HammerMode;
    return ThresholdTable({{0xFF, 0x00, M::single_sided, 185000}, {0xFF, 0x00, M::double_sided, 115000},
                           {0x00, 0xFF, M::single_sided, 240000}, {0x00, 0xFF, M::double_sided, 140000},
                           {0x55, 0x55, M::single_sided, 260000}, {0x55, 0x55, M::double_sided, 160000},
                           {0xAA, 0xAA, M::single_sided, 265000}, {0xAA, 0xAA, M::double_sided, 165000}});
  }

  const std::vector<ThresholdEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

  /// Nearest pattern class by Hamming distance of (victim, aggressor); ties go
  /// to the earliest entry.
  const ThresholdEntry& lookup(std::uint8_t victim, std::uint8_t aggressor, HammerMode mode) const {
    const ThresholdEntry* best = nullptr;
    int best_d = 99;
    for (const auto& e : entries_) {
      if (e.mode != mode) continue;
      const int d = std::popcount(static_cast<unsigned>(e.victim ^ victim)) +
                    std::popcount(static_cast<unsigned>(e.aggressor ^ aggressor));
      if (d < best_d) {
        best_d = d;
        best = &e;
      }
    }
    if (!best) throw ConfigError("threshold table has no " + to_string(mode) + "-sided entry");
    return *best;
  }

  std::uint64_t single_sided(std::uint8_t victim, std::uint8_t aggressor) const {
    return lookup(victim, aggressor, HammerMode::single_sided).count;
  }
  std::uint64_t double_sided(std::uint8_t victim, std::uint8_t aggressor) const {
    return lookup(victim, aggressor, HammerMode::double_sided).count;
  }

  std::vector<std::uint64_t> single_sided_counts() const {
    std::vector<std::uint64_t> out;
    for (const auto& e : entries_)
      if (e.mode == HammerMode::single_sided) out.push_back(e.count);
    return out;
  }

 private:
  std::vector<ThresholdEntry> entries_;
};

/// `victim_hex,aggressor_hex,mode,count` per line; '#' starts a comment.
inline ThresholdTable parse_threshold_table(std::istream& is) {
  std::vector<ThresholdEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\r' || line.back() == '\t')) line.pop_back();
    if (line.empty() || line.rfind("victim", 0) == 0) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 4) throw ConfigError("threshold line " + std::to_string(lineno) + ": expected 4 fields");
    auto hex = [&](std::string_view s) {
      if (s.starts_with("0x") || s.starts_with("0X")) s.remove_prefix(2);
      const auto v = detail::parse_u64(s, 16, "pattern byte");
      if (v > 0xFF) throw ConfigError("threshold line " + std::to_string(lineno) + ": pattern exceeds one byte");
      return static_cast<std::uint8_t>(v);
    };
    ThresholdEntry e;
    e.victim = hex(f[0]);
    e.aggressor = hex(f[1]);
    if (f[2] == "single") e.mode = HammerMode::single_sided;
    else if (f[2] == "double") e.mode = HammerMode::double_sided;
    else throw ConfigError("threshold line " + std::to_string(lineno) + ": mode must be single or double");
    e.count = detail::parse_u64(f[3], 10, "threshold count");
    entries.push_back(e);
  }
  if (entries.empty()) throw ConfigError("threshold table is empty");
  return ThresholdTable(std::move(entries));
}

inline void write_threshold_table(std::ostream& os, const ThresholdTable& t) {
  char buf[64];
  os << "victim_hex,aggressor_hex,mode,count\n";
  for (const auto& e : t.entries()) {
    std::snprintf(buf, sizeof buf, "%02X,%02X,%s,%llu\n", e.victim, e.aggressor, to_string(e.mode).c_str(),
                  static_cast<unsigned long long>(e.count));
    os << buf;
  }
}

/// Seeded per-row vulnerability and threshold multiplier.
class VulnerabilityMap {
 public:
  VulnerabilityMap(std::uint64_t seed, double vulnerable_fraction = 0.95, double multiplier_jitter = 0.0)
      : seed_(seed), fraction_(vulnerable_fraction), jitter_(multiplier_jitter) {
    if (!(fraction_ >= 0.0 && fraction_ <= 1.0)) throw ConfigError("vulnerable fraction must lie in [0, 1]");
    if (!(jitter_ >= 0.0 && jitter_ < 1.0)) throw ConfigError("multiplier jitter must lie in [0, 1)");
  }

  bool vulnerable(std::uint32_t bank, std::uint32_t row) const { return unit(bank, row, 0) < fraction_; }

  /// 1 + jitter * u with u uniform in [-1, 1); exactly 1 without jitter.
  double multiplier(std::uint32_t bank, std::uint32_t row) const {
    if (jitter_ == 0.0) return 1.0;
    return 1.0 + jitter_ * (2.0 * unit(bank, row, 1) - 1.0);
  }

 private:
  double unit(std::uint32_t bank, std::uint32_t row, std::uint64_t stream) const {
    const std::uint64_t h = derive_seed(seed_, bank, row, stream);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }

  std::uint64_t seed_;
  double fraction_;
  double jitter_;
};

/// Majority fill byte of every row; unset rows hold `default_fill`.
class DataContents {
 public:
  explicit DataContents(std::uint8_t default_fill = 0x55) : default_(default_fill) {}

  std::uint8_t fill(std::uint32_t bank, std::uint32_t row) const {
    const auto it = rows_.find({bank, row});
    return it == rows_.end() ? default_ : it->second;
  }

  void set_fill(std::uint32_t bank, std::uint32_t row, std::uint8_t v) { rows_[{bank, row}] = v; }

  /// Stores the most frequent byte of `bytes` (smallest value on ties).
  void set_contents(std::uint32_t bank, std::uint32_t row, std::span<const std::uint8_t> bytes) {
    std::uint64_t hist[256] = {};
    for (auto b : bytes) ++hist[b];
    std::size_t best = 0;
    for (std::size_t v = 1; v < 256; ++v)
      if (hist[v] > hist[best]) best = v;
    set_fill(bank, row, static_cast<std::uint8_t>(best));
  }

  std::uint8_t default_fill() const { return default_; }

 private:
  std::uint8_t default_;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint8_t> rows_;
};

/// Bit positions (within the fill byte) that a flip disturbs: where victim and
/// aggressor differ, else the victim's charged bits, else all bits.
inline std::uint8_t flip_mask(std::uint8_t victim, std::uint8_t aggressor) {
  if (victim != aggressor) return static_cast<std::uint8_t>(victim ^ aggressor);
  return victim != 0 ? victim : 0xFF;
}

struct TrrConfig {
  std::uint32_t capacity = 4;  // 0 disables TRR
  std::uint32_t radius = 1;
};

struct BitFlip {
  std::uint32_t bank = 0;
  std::uint32_t row = 0;
  Picoseconds time_ps = 0;
  HammerMode mode = HammerMode::single_sided;
  std::uint64_t effective_count = 0;
  double threshold = 0.0;  // applicable threshold including multiplier (2x per-side count for double)
  std::uint8_t victim_fill = 0;
  std::uint8_t aggressor_fill = 0;
  std::uint8_t bits = 0;

  friend bool operator==(const BitFlip&, const BitFlip&) = default;
};

struct BitFlipReport {
  std::vector<BitFlip> flips;
};

inline void write_flip_report(std::ostream& os, const BitFlipReport& r) {
  os << "bank,row,time_ns,mode,effective,threshold,victim_hex,aggressor_hex,bits\n";
  char buf[160];
  for (const auto& f : r.flips) {
    std::string bits;
    for (int b = 0; b < 8; ++b)
      if (f.bits & (1u << b)) bits += (bits.empty() ? "" : " ") + std::to_string(b);
    std::snprintf(buf, sizeof buf, "%u,%u,%llu.%03llu,%s,%llu,%.0f,%02X,%02X,", f.bank, f.row,
                  static_cast<unsigned long long>(f.time_ps / 1000), static_cast<unsigned long long>(f.time_ps % 1000),
                  to_string(f.mode).c_str(), static_cast<unsigned long long>(f.effective_count), f.threshold,
                  f.victim_fill, f.aggressor_fill);
    os << buf << bits << '\n';
  }
}

/// Open rows per bank and ACTs per row since that row's last refresh.
class ActivationLedger {
 public:
  ActivationLedger(std::uint32_t banks, std::uint32_t rows)
      : banks_(banks), rows_(rows), open_(banks, kClosed), acts_(static_cast<std::size_t>(banks) * rows, 0) {}

  /// Hit on the open row issues nothing; otherwise PRE + ACT and the row's count grows.
  bool row_buffer_step(std::uint32_t bank, std::uint32_t row) {
    if (open_[bank] == row) return false;
    open_[bank] = row;
    ++acts_[idx(bank, row)];
    return true;
  }

  void refresh_row(std::uint32_t bank, std::uint32_t row) { acts_[idx(bank, row)] = 0; }
  std::uint64_t count(std::uint32_t bank, std::uint32_t row) const { return acts_[idx(bank, row)]; }
  std::int64_t open_row(std::uint32_t bank) const { return open_[bank] == kClosed ? -1 : open_[bank]; }
  std::uint32_t banks() const { return banks_; }
  std::uint32_t rows() const { return rows_; }

 private:
  static constexpr std::uint32_t kClosed = UINT32_MAX;
  std::size_t idx(std::uint32_t b, std::uint32_t r) const { return static_cast<std::size_t>(b) * rows_ + r; }

  std::uint32_t banks_, rows_;
  std::vector<std::uint32_t> open_;
  std::vector<std::uint64_t> acts_;
};

/// Per-bank top-C tracker of ACT counts within the current refresh period.
/// Ties rank the lower row first. Counts only grow within a period, so the
/// incremental update is exact.
class TrrSampler {
 public:
  TrrSampler(std::uint32_t banks, std::uint32_t rows, TrrConfig cfg)
      : rows_(rows), cfg_(cfg), counts_(static_cast<std::size_t>(banks) * rows, 0), tracked_(banks) {}

  void observe(std::uint32_t bank, std::uint32_t row) {
    if (cfg_.capacity == 0) return;
    auto& c = counts_[static_cast<std::size_t>(bank) * rows_ + row];
    if (c == 0) touched_.push_back(static_cast<std::size_t>(bank) * rows_ + row);
    ++c;
    auto& t = tracked_[bank];
    auto better = [](const Slot& a, const Slot& b) { return a.count != b.count ? a.count > b.count : a.row < b.row; };
    auto it = std::find_if(t.begin(), t.end(), [&](const Slot& s) { return s.row == row; });
    if (it != t.end()) {
      it->count = c;
    } else if (t.size() < cfg_.capacity) {
      t.push_back({row, c});
    } else if (better(Slot{row, c}, t.back())) {
      t.back() = {row, c};
    } else {
      return;
    }
    std::sort(t.begin(), t.end(), better);
  }

  bool tracked(std::uint32_t bank, std::uint32_t row) const {
    for (const auto& s : tracked_[bank])
      if (s.row == row) return true;
    return false;
  }

  /// Whether any row within the refresh radius of `victim` is tracked.
  bool protects(std::uint32_t bank, std::uint32_t victim) const {
    if (cfg_.capacity == 0) return false;
    for (const auto& s : tracked_[bank]) {
      const std::uint32_t d = s.row > victim ? s.row - victim : victim - s.row;
      if (d >= 1 && d <= cfg_.radius) return true;
    }
    return false;
  }

  std::vector<std::uint32_t> tracked_rows(std::uint32_t bank) const {
    std::vector<std::uint32_t> out;
    for (const auto& s : tracked_[bank]) out.push_back(s.row);
    return out;
  }

  void reset_period() {
    for (auto i : touched_) counts_[i] = 0;
    touched_.clear();
    for (auto& t : tracked_) t.clear();
  }

  const TrrConfig& config() const { return cfg_; }

 private:
  struct Slot {
    std::uint32_t row;
    std::uint64_t count;
  };
  std::uint32_t rows_;
  TrrConfig cfg_;
  std::vector<std::uint64_t> counts_;
  std::vector<std::size_t> touched_;
  std::vector<std::vector<Slot>> tracked_;
};

struct RowActs {
  std::uint32_t bank = 0;
  std::uint32_t row = 0;
  std::uint64_t acts = 0;

  friend bool operator==(const RowActs&, const RowActs&) = default;
};

/// ACTs issued within one aligned refresh window.
struct WindowSummary {
  std::uint64_t index = 0;
  std::uint64_t total_acts = 0;
  std::vector<std::uint64_t> bank_acts;
  std::vector<RowActs> rows;  // nonzero rows, ordered by (bank, row)

  friend bool operator==(const WindowSummary&, const WindowSummary&) = default;
};

struct SimulationConfig {
  DramConfig dram;
  DramMapping mapping;
  TrrConfig trr;
  double vulnerable_fraction = 0.95;
  double multiplier_jitter = 0.0;
  std::uint8_t default_fill = 0x55;
  bool enforce_act_cap = true;
};

/// Event-driven DRAM model. Each victim row accumulates per-side exposure
/// (ACTs of row-1 and row+1 since the victim's last refresh, by the regular
/// schedule or by TRR). A victim flips at most once per exposure window.
class DramSimulator {
 public:
  DramSimulator(const SimulationConfig& cfg, ThresholdTable thresholds, std::uint64_t vulnerability_seed)
      : cfg_(cfg),
        thresholds_(std::move(thresholds)),
        vmap_(vulnerability_seed, cfg.vulnerable_fraction, cfg.multiplier_jitter),
        contents_(cfg.default_fill),
        banks_(cfg.mapping.bank_count),
        rows_(cfg.mapping.rows_per_bank),
        ledger_(banks_, rows_),
        trr_(banks_, rows_, cfg.trr),
        exp_lo_(static_cast<std::size_t>(banks_) * rows_, 0),
        exp_hi_(static_cast<std::size_t>(banks_) * rows_, 0),
        flipped_(static_cast<std::size_t>(banks_) * rows_, 0),
        window_acts_(static_cast<std::size_t>(banks_) * rows_, 0),
        bank_acts_(banks_, 0) {
    cfg_.mapping.validate();
    cfg_.dram.validate();
    if (thresholds_.empty()) throw ConfigError("threshold table is empty");
    trefi_ = cfg_.dram.trefi_ps();
    window_ = cfg_.dram.refresh_ps();
    cap_ = cfg_.dram.act_cap();
  }

  DataContents& contents() { return contents_; }
  const ActivationLedger& ledger() const { return ledger_; }
  const TrrSampler& trr() const { return trr_; }
  const VulnerabilityMap& vulnerability() const { return vmap_; }
  const BitFlipReport& report() const { return report_; }
  const std::vector<WindowSummary>& windows() const { return windows_; }
  std::uint64_t total_acts() const { return total_acts_; }
  std::uint64_t refreshes_issued() const { return refs_done_; }

  std::uint64_t exposure_lo(std::uint32_t bank, std::uint32_t row) const { return exp_lo_[idx(bank, row)]; }
  std::uint64_t exposure_hi(std::uint32_t bank, std::uint32_t row) const { return exp_hi_[idx(bank, row)]; }

  /// Rows refreshed by the n-th REF command (1-based): a contiguous slice of
  /// every bank so each row is refreshed exactly once per window.
  std::pair<std::uint32_t, std::uint32_t> ref_rows(std::uint64_t n) const {
    const std::uint64_t g = (n - 1) % cfg_.dram.ref_commands;
    const std::uint64_t per = cfg_.dram.ref_commands;
    return {static_cast<std::uint32_t>(g * rows_ / per), static_cast<std::uint32_t>((g + 1) * rows_ / per)};
  }

  void access(const AccessEvent& e) {
    if (started_ && e.time_ps < last_time_) throw TraceError("trace is not time ordered");
    if (e.size == 0) throw TraceError("zero-sized access");
    if (e.paddr >= cfg_.mapping.capacity() || e.paddr + e.size > cfg_.mapping.capacity())
      throw TraceError("access beyond DRAM capacity");
    started_ = true;
    last_time_ = e.time_ps;
    advance_to(e.time_ps);
    const std::uint64_t row_bytes = cfg_.mapping.row_size_bytes;
    std::uint64_t a = e.paddr;
    const std::uint64_t end = e.paddr + e.size;
    while (a < end) {
      const auto c = physical_to_dram(a, cfg_.mapping);
      step(c.bank, c.row, e.time_ps);
      a = (a / row_bytes + 1) * row_bytes;
    }
  }

  /// Issues remaining REFs up to `end_ps` and closes the current window.
  void finish(Picoseconds end_ps) {
    if (!started_) return;
    advance_to(std::max(end_ps, last_time_));
    close_window();
    started_ = false;
  }

 private:
  std::size_t idx(std::uint32_t b, std::uint32_t r) const { return static_cast<std::size_t>(b) * rows_ + r; }

  void advance_to(Picoseconds t) {
    while ((refs_done_ + 1) * trefi_ <= t) {
      const Picoseconds ref_time = (refs_done_ + 1) * trefi_;
      if (ref_time / window_ != window_index_) {
        close_window();
        window_index_ = ref_time / window_;
        trr_.reset_period();
      }
      ++refs_done_;
      refresh_tick(refs_done_);
    }
    if (t / window_ != window_index_) {
      close_window();
      window_index_ = t / window_;
      trr_.reset_period();
    }
  }

  void refresh_victim(std::uint32_t b, std::uint32_t r) {
    const auto i = idx(b, r);
    exp_lo_[i] = exp_hi_[i] = 0;
    flipped_[i] = 0;
  }

  void refresh_tick(std::uint64_t n) {
    const auto [lo, hi] = ref_rows(n);
    for (std::uint32_t b = 0; b < banks_; ++b) {
      for (std::uint32_t r = lo; r < hi; ++r) {
        ledger_.refresh_row(b, r);
        refresh_victim(b, r);
      }
      if (cfg_.trr.capacity == 0) continue;
      for (auto t : trr_.tracked_rows(b)) {
        for (std::uint32_t d = 1; d <= cfg_.trr.radius; ++d) {
          if (t >= d) {
            ledger_.refresh_row(b, t - d);
            refresh_victim(b, t - d);
          }
          if (t + d < rows_) {
            ledger_.refresh_row(b, t + d);
            refresh_victim(b, t + d);
          }
        }
      }
    }
  }

  void step(std::uint32_t b, std::uint32_t r, Picoseconds t) {
    if (!ledger_.row_buffer_step(b, r)) return;
    ++total_acts_;
    const auto i = idx(b, r);
    if (window_acts_[i]++ == 0) window_touched_.push_back(i);
    if (++bank_acts_[b] > cap_ && cfg_.enforce_act_cap)
      throw TraceError("bank " + std::to_string(b) + " exceeds " + std::to_string(cap_) +
                       " activations in refresh window " + std::to_string(window_index_) +
                       "; the trace is faster than tRC allows");
    trr_.observe(b, r);
    if (r > 0) {
      ++exp_hi_[idx(b, r - 1)];
      check_flip(b, r - 1, t);
    }
    if (r + 1 < rows_) {
      ++exp_lo_[idx(b, r + 1)];
      check_flip(b, r + 1, t);
    }
  }

  void check_flip(std::uint32_t b, std::uint32_t v, Picoseconds t) {
    const auto i = idx(b, v);
    if (flipped_[i] || !vmap_.vulnerable(b, v) || trr_.protects(b, v)) return;
    const std::uint64_t lo = exp_lo_[i], hi = exp_hi_[i];
    const bool hi_side = hi > lo;
    const std::uint32_t agg_row = (hi_side || v == 0) ? v + 1 : v - 1;
    const std::uint8_t vf = contents_.fill(b, v);
    const std::uint8_t af = contents_.fill(b, agg_row);
    const double mult = vmap_.multiplier(b, v);
    const double ts = static_cast<double>(thresholds_.single_sided(vf, af)) * mult;
    const double td = static_cast<double>(thresholds_.double_sided(vf, af)) * mult;
    BitFlip f;
    if (2.0 * static_cast<double>(lo) >= ts && 2.0 * static_cast<double>(hi) >= ts) {
      f.mode = HammerMode::double_sided;
      f.effective_count = lo + hi;
      f.threshold = 2.0 * td;
    } else {
      f.mode = HammerMode::single_sided;
      f.effective_count = std::max(lo, hi);
      f.threshold = ts;
    }
    if (static_cast<double>(f.effective_count) < f.threshold) return;
    f.bank = b;
    f.row = v;
    f.time_ps = t;
    f.victim_fill = vf;
    f.aggressor_fill = af;
    f.bits = flip_mask(vf, af);
    flipped_[i] = 1;
    report_.flips.push_back(f);
  }

  void close_window() {
    if (window_touched_.empty() && !started_) return;
    WindowSummary w;
    w.index = window_index_;
    w.bank_acts = bank_acts_;
    std::sort(window_touched_.begin(), window_touched_.end());
    for (auto i : window_touched_) {
      w.rows.push_back({static_cast<std::uint32_t>(i / rows_), static_cast<std::uint32_t>(i % rows_), window_acts_[i]});
      w.total_acts += window_acts_[i];
      window_acts_[i] = 0;
    }
    window_touched_.clear();
    std::fill(bank_acts_.begin(), bank_acts_.end(), 0);
    if (w.total_acts > 0) windows_.push_back(std::move(w));
  }

  SimulationConfig cfg_;
  ThresholdTable thresholds_;
  VulnerabilityMap vmap_;
  DataContents contents_;
  std::uint32_t banks_, rows_;
  ActivationLedger ledger_;
  TrrSampler trr_;
  std::vector<std::uint64_t> exp_lo_, exp_hi_;
  std::vector<std::uint8_t> flipped_;
  std::vector<std::uint64_t> window_acts_;
  std::vector<std::size_t> window_touched_;
  std::vector<std::uint64_t> bank_acts_;
  std::vector<WindowSummary> windows_;
  BitFlipReport report_;
  Picoseconds trefi_ = 0, window_ = 0;
  std::uint64_t cap_ = 0;
  std::uint64_t refs_done_ = 0;
  std::uint64_t window_index_ = 0;
  std::uint64_t total_acts_ = 0;
  Picoseconds last_time_ = 0;
  bool started_ = false;
};

struct SimulationResult {
  std::vector<WindowSummary> windows;
  BitFlipReport report;
  std::uint64_t total_acts = 0;
};

/// Replays a time-ordered trace through the DRAM model.
inline SimulationResult simulate_trace(std::span<const AccessEvent> trace, const SimulationConfig& cfg,
                                       const ThresholdTable& thresholds, std::uint64_t seed,
                                       const DataContents* contents = nullptr) {
  DramSimulator sim(cfg, thresholds, seed);
  if (contents) sim.contents() = *contents;
  for (const auto& e : trace) sim.access(e);
  sim.finish(trace.empty() ? 0 : trace.back().time_ps);
  return {sim.windows(), sim.report(), sim.total_acts()};
}

}  // namespace hammersim
