#pragma once

// Server memory model: region layout on pinned 2 MB pages, address
// translation down to DRAM coordinates, and conversion of aggregation access
// scripts into timed physical access traces.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hammersim/common.hpp"
#include "hammersim/fl.hpp"
#include "hammersim/timing.hpp"

namespace hammersim {

inline constexpr std::uint64_t kHugePage = 2ull << 20;
inline constexpr std::uint64_t kSmallPage = 4096;

struct DramCoord {
  std::uint32_t bank = 0;
  std::uint32_t row = 0;
  std::uint32_t column = 0;

  friend bool operator==(const DramCoord&, const DramCoord&) = default;
};

/// Physical address slicing: column = low bits, bank = next bits XOR an
/// optional higher field starting at `bank_xor_shift`, row = remaining bits.
struct DramMapping {
  std::uint32_t bank_count = 16;
  std::uint32_t rows_per_bank = 8192;
  std::uint32_t row_size_bytes = 8192;
  std::uint32_t bank_xor_shift = 17;  // 0 disables the XOR

  void validate() const {
    for (std::uint32_t v : {bank_count, rows_per_bank, row_size_bytes})
      if (v == 0 || !std::has_single_bit(v)) throw ConfigError("DRAM geometry must use powers of two");
    if (bank_xor_shift != 0) {
      if (bank_xor_shift < row_shift()) throw ConfigError("bank XOR field must lie above the bank bits");
      if (bank_xor_shift + bank_bits() > address_bits()) throw ConfigError("bank XOR field exceeds the address width");
    }
  }

  std::uint32_t column_bits() const { return static_cast<std::uint32_t>(std::countr_zero(row_size_bytes)); }
  std::uint32_t bank_bits() const { return static_cast<std::uint32_t>(std::countr_zero(bank_count)); }
  std::uint32_t row_shift() const { return column_bits() + bank_bits(); }
  std::uint32_t address_bits() const {
    return row_shift() + static_cast<std::uint32_t>(std::countr_zero(rows_per_bank));
  }
  std::uint64_t capacity() const {
    return static_cast<std::uint64_t>(bank_count) * rows_per_bank * row_size_bytes;
  }

  std::uint32_t xor_field(std::uint64_t paddr) const {
    if (bank_xor_shift == 0) return 0;
    return static_cast<std::uint32_t>((paddr >> bank_xor_shift) & (bank_count - 1));
  }
};

inline DramCoord physical_to_dram(std::uint64_t paddr, const DramMapping& m) {
  if (paddr >= m.capacity()) throw InvalidArgument("physical address beyond DRAM capacity");
  DramCoord c;
  c.column = static_cast<std::uint32_t>(paddr & (m.row_size_bytes - 1));
  const auto raw_bank = static_cast<std::uint32_t>((paddr >> m.column_bits()) & (m.bank_count - 1));
  c.bank = raw_bank ^ m.xor_field(paddr);
  c.row = static_cast<std::uint32_t>(paddr >> m.row_shift());
  return c;
}

inline std::uint64_t dram_to_physical(const DramCoord& c, const DramMapping& m) {
  require(c.bank < m.bank_count && c.row < m.rows_per_bank && c.column < m.row_size_bytes,
          "DRAM coordinate out of range");
  const std::uint64_t high = static_cast<std::uint64_t>(c.row) << m.row_shift();
  const std::uint32_t raw_bank = c.bank ^ m.xor_field(high);
  return high | (static_cast<std::uint64_t>(raw_bank) << m.column_bits()) | c.column;
}

// ---------------------------------------------------------------------------
// Layout

struct LayoutConfig {
  std::uint64_t virtual_base = 0x7f0000000000ull;
  std::uint32_t metadata_bytes = 64;     // per-tensor header (shape, dtype, strides)
  std::uint32_t accumulator_bytes = 4;   // per-parameter server accumulation width
  std::uint32_t writeback_bytes = 4;
  std::uint32_t ingress_slots = 16;
  std::uint32_t ingress_slot_bytes = 65536;

  void validate() const {
    if (virtual_base % kHugePage != 0) throw ConfigError("virtual base must be 2 MB aligned");
    if (accumulator_bytes == 0 || writeback_bytes == 0 || metadata_bytes == 0)
      throw ConfigError("region element sizes must be positive");
    if (ingress_slots == 0 || ingress_slot_bytes == 0) throw ConfigError("ingress queue must be non-empty");
  }
};

struct RegionInfo {
  Region kind = Region::values;
  std::uint32_t layer = 0;
  std::uint64_t vstart = 0;
  std::uint64_t bytes = 0;
  bool pinned = true;

  std::uint64_t vend() const { return vstart + bytes; }
};

inline std::uint64_t align_up(std::uint64_t v, std::uint64_t a) { return (v + a - 1) / a * a; }

/// Bytes of `count` packed elements at `bits` each.
inline std::uint64_t packed_bytes(std::uint64_t count, int bits) { return (count * static_cast<std::uint64_t>(bits) + 7) / 8; }

class MemoryLayout {
 public:
  MemoryLayout(ModelSpec spec, DramMapping mapping, LayoutConfig cfg, std::vector<RegionInfo> regions,
               std::vector<std::uint64_t> frames)
      : spec_(std::move(spec)), mapping_(mapping), cfg_(cfg), regions_(std::move(regions)), frames_(std::move(frames)) {
    for (std::size_t r = 0; r < regions_.size(); ++r) {
      const auto& reg = regions_[r];
      if (reg.kind == Region::ingress_queue) ingress_ = r;
      else index_[key(reg.kind, reg.layer)] = r;
    }
  }

  const ModelSpec& spec() const { return spec_; }
  const DramMapping& mapping() const { return mapping_; }
  const LayoutConfig& config() const { return cfg_; }
  const std::vector<RegionInfo>& regions() const { return regions_; }
  /// Physical frame base of each 2 MB virtual page, in page order.
  const std::vector<std::uint64_t>& page_table() const { return frames_; }
  std::uint64_t virtual_base() const { return cfg_.virtual_base; }
  std::uint64_t mapped_bytes() const { return frames_.size() * kHugePage; }

  const RegionInfo& region(Region kind, std::uint32_t layer) const {
    if (kind == Region::ingress_queue) return regions_.at(ingress_);
    const auto it = index_.find(key(kind, layer));
    if (it == index_.end()) throw InvalidArgument("no such region in layout");
    return regions_[it->second];
  }

  bool is_mapped(std::uint64_t vaddr) const {
    return vaddr >= cfg_.virtual_base && vaddr - cfg_.virtual_base < mapped_bytes();
  }

  std::uint64_t virtual_to_physical(std::uint64_t vaddr) const {
    if (!is_mapped(vaddr)) throw InvalidArgument("virtual address is not mapped");
    const std::uint64_t off = vaddr - cfg_.virtual_base;
    return frames_[off / kHugePage] + off % kHugePage;
  }

  /// Byte address and access size of one logical operation.
  std::pair<std::uint64_t, std::uint32_t> element_address(const AccessOp& op) const {
    const auto& reg = region(op.region, op.layer);
    switch (op.region) {
      case Region::accumulator: return {reg.vstart + op.element * cfg_.accumulator_bytes, cfg_.accumulator_bytes};
      case Region::writeback: return {reg.vstart + op.element * cfg_.writeback_bytes, cfg_.writeback_bytes};
      case Region::values: {
        const int bits = spec_.layers()[op.layer].precision_bits;
        const std::uint32_t size = std::max(1, bits / 8);
        return {reg.vstart + op.element * static_cast<std::uint64_t>(bits) / 8, size};
      }
      case Region::metadata: return {reg.vstart, cfg_.metadata_bytes};
      case Region::ingress_queue:
        return {reg.vstart + (op.element % cfg_.ingress_slots) * cfg_.ingress_slot_bytes, cfg_.ingress_slot_bytes};
    }
    throw InvalidArgument("unknown region");
  }

 private:
  static std::uint64_t key(Region kind, std::uint32_t layer) {
    return (static_cast<std::uint64_t>(layer) << 8) | static_cast<std::uint64_t>(kind);
  }

  ModelSpec spec_;
  DramMapping mapping_;
  LayoutConfig cfg_;
  std::vector<RegionInfo> regions_;
  std::vector<std::uint64_t> frames_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
  std::size_t ingress_ = 0;
};

/// Packs per-layer metadata, values, accumulator and writeback regions, then the
/// ingress ring, at 4 KB alignment from the virtual base; backs each 2 MB page
/// with a distinct frame drawn by a seeded permutation of DRAM.
inline MemoryLayout build_layout(const ModelSpec& spec, const DramMapping& mapping, const LayoutConfig& cfg,
                                 std::uint64_t seed) {
  mapping.validate();
  cfg.validate();
  require(!spec.empty(), "cannot lay out an empty model");
  std::vector<RegionInfo> regions;
  std::uint64_t cursor = cfg.virtual_base;
  auto place = [&](Region kind, std::uint32_t layer, std::uint64_t bytes) {
    cursor = align_up(cursor, kSmallPage);
    regions.push_back({kind, layer, cursor, bytes, true});
    cursor += bytes;
  };
  for (std::uint32_t l = 0; l < spec.layer_count(); ++l) {
    const auto& layer = spec.layers()[l];
    place(Region::metadata, l, cfg.metadata_bytes);
    place(Region::values, l, packed_bytes(layer.element_count, layer.precision_bits));
    place(Region::accumulator, l, layer.element_count * cfg.accumulator_bytes);
    place(Region::writeback, l, layer.element_count * cfg.writeback_bytes);
  }
  place(Region::ingress_queue, 0, static_cast<std::uint64_t>(cfg.ingress_slots) * cfg.ingress_slot_bytes);

  const std::uint64_t pages = align_up(cursor - cfg.virtual_base, kHugePage) / kHugePage;
  const std::uint64_t frames_available = mapping.capacity() / kHugePage;
  if (pages > frames_available)
    throw ConfigError("layout needs " + std::to_string(pages) + " huge pages but DRAM holds " +
                      std::to_string(frames_available));
  std::vector<std::uint64_t> frame_ids(frames_available);
  for (std::uint64_t f = 0; f < frames_available; ++f) frame_ids[f] = f;
  Rng rng(seed);
  rng.shuffle(frame_ids);
  std::vector<std::uint64_t> frames(pages);
  for (std::uint64_t p = 0; p < pages; ++p) frames[p] = frame_ids[p] * kHugePage;
  return MemoryLayout(spec, mapping, cfg, std::move(regions), std::move(frames));
}

/// Region table: name, layer, virtual range and the physical frames touched.
inline void write_layout_dump(std::ostream& os, const MemoryLayout& layout) {
  os << "region,layer,vstart_hex,vend_hex,pstart_hex,bytes,pinned\n";
  char buf[160];
  for (const auto& r : layout.regions()) {
    std::snprintf(buf, sizeof buf, "%s,%u,%llx,%llx,%llx,%llu,%d\n", to_string(r.kind).c_str(), r.layer,
                  static_cast<unsigned long long>(r.vstart), static_cast<unsigned long long>(r.vend()),
                  static_cast<unsigned long long>(layout.virtual_to_physical(r.vstart)),
                  static_cast<unsigned long long>(r.bytes), r.pinned ? 1 : 0);
    os << buf;
  }
}

// ---------------------------------------------------------------------------
// Access traces

struct AccessEvent {
  Picoseconds time_ps = 0;
  std::uint64_t paddr = 0;
  AccessKind kind = AccessKind::read;
  std::uint32_t size = 0;

  friend bool operator==(const AccessEvent&, const AccessEvent&) = default;
};

struct TraceMetadata {
  std::uint64_t first_round = 0;
  std::uint64_t last_round = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

struct AccessTrace {
  TraceMetadata meta;
  std::vector<AccessEvent> events;
  Picoseconds end_ps = 0;
};

struct TraceOptions {
  // Merge runs of element-contiguous accesses inside one DRAM row into a
  // leading read and a trailing write. Row-buffer behavior is unchanged.
  bool coalesce = true;
};

/// Turns aggregation scripts into timed physical events. Every access reaches
/// DRAM (no cache). A message of B payload bits occupies B / BW, with its
/// operations spaced uniformly; round-end writeback events carry the
/// timestamp of the round's end.
class TraceBuilder {
 public:
  TraceBuilder(const MemoryLayout& layout, BandwidthModel bw, Picoseconds start_ps = 0, TraceOptions opts = {})
      : layout_(layout), bw_(bw), start_ps_(start_ps), now_ps_(start_ps), opts_(opts) {
    bw_.validate();
  }

  Picoseconds now() const { return now_ps_; }
  std::uint64_t messages_emitted() const { return message_seq_; }

  template <class Sink>
  void emit_round(const AccessScript& script, Sink&& sink) {
    for (const auto& m : script.messages) emit_message(m, sink);
    if (!script.writeback_indices.empty()) emit_writeback(script, sink);
  }

 private:
  struct Piece {
    std::uint32_t op_index;  // position of the first underlying operation
    std::uint64_t paddr;
    AccessKind kind;
    std::uint32_t size;
  };
  struct Template {
    std::shared_ptr<const std::vector<std::uint32_t>> owner;
    std::vector<Piece> pieces;
    std::uint32_t ops = 0;
  };

  std::uint64_t row_key(std::uint64_t paddr) const {
    const auto c = physical_to_dram(paddr, layout_.mapping());
    return (static_cast<std::uint64_t>(c.bank) << 32) | c.row;
  }

  /// Splits [vaddr, vaddr + size) at DRAM row boundaries.
  template <class F>
  void for_each_row_chunk(std::uint64_t vaddr, std::uint64_t size, F&& f) const {
    const std::uint64_t row = layout_.mapping().row_size_bytes;
    while (size > 0) {
      const std::uint64_t paddr = layout_.virtual_to_physical(vaddr);
      const std::uint64_t chunk = std::min(size, row - paddr % row);
      f(paddr, static_cast<std::uint32_t>(chunk));
      vaddr += chunk;
      size -= chunk;
    }
  }

  const Template& message_template(const std::shared_ptr<const std::vector<std::uint32_t>>& indices) {
    auto it = cache_.find(indices.get());
    if (it != cache_.end() && it->second.owner == indices) return it->second;
    if (cache_.size() > 4096) cache_.clear();
    Template t;
    t.owner = indices;
    const auto& spec = layout_.spec();
    std::uint64_t prev_end = 0, prev_row = ~0ull;
    std::uint32_t op = 0;
    for (auto idx : *indices) {
      const auto layer = static_cast<std::uint32_t>(spec.layer_of(idx));
      const AccessOp rd{Region::accumulator, layer, idx - spec.layer_offset(layer), AccessKind::read};
      const auto [vaddr, size] = layout_.element_address(rd);
      const std::uint64_t paddr = layout_.virtual_to_physical(vaddr);
      const std::uint64_t rk = row_key(paddr);
      const bool extend = opts_.coalesce && !t.pieces.empty() && rk == prev_row && paddr == prev_end;
      if (extend) {
        t.pieces[t.pieces.size() - 2].size += size;
        t.pieces.back().op_index = op + 1;
        t.pieces.back().size += size;
      } else {
        t.pieces.push_back({op, paddr, AccessKind::read, size});
        t.pieces.push_back({op + 1, paddr, AccessKind::write, size});
      }
      prev_end = paddr + size;
      prev_row = rk;
      op += 2;
    }
    t.ops = op;
    if (opts_.coalesce) {
      // A run's write piece carries the run's start address so it stays inside the row.
      for (std::size_t k = 0; k + 1 < t.pieces.size(); k += 2) t.pieces[k + 1].paddr = t.pieces[k].paddr;
    }
    return cache_[indices.get()] = std::move(t);
  }

  template <class Sink>
  void emit_message(const ScriptMessage& m, Sink& sink) {
    const std::uint64_t seq = message_seq_++;
    const Picoseconds t0 = start_ps_ + bw_.transfer_ps(bits_done_);
    bits_done_ += m.payload_bits;
    const Picoseconds t1 = start_ps_ + bw_.transfer_ps(bits_done_);

    struct Ingress {
      std::uint64_t paddr;
      std::uint32_t size;
    };
    std::vector<Ingress> ingress;
    const auto [slot_vaddr, slot_bytes] = layout_.element_address(AccessOp{Region::ingress_queue, 0, seq, AccessKind::write});
    const std::uint64_t payload = std::max<std::uint64_t>(1, (m.payload_bits + 7) / 8);
    if (payload > slot_bytes) throw InvalidArgument("message larger than an ingress slot");
    for_each_row_chunk(slot_vaddr, payload, [&](std::uint64_t paddr, std::uint32_t size) { ingress.push_back({paddr, size}); });

    const Template& t = message_template(m.indices);
    const std::uint64_t n_ops = ingress.size() + t.ops;
    const Picoseconds dur = t1 - t0;
    auto at = [&](std::uint64_t op) {
      return t0 + static_cast<Picoseconds>(static_cast<unsigned __int128>(op) * dur / n_ops);
    };
    for (std::size_t k = 0; k < ingress.size(); ++k)
      sink(AccessEvent{at(k), ingress[k].paddr, AccessKind::write, ingress[k].size});
    for (const auto& p : t.pieces) sink(AccessEvent{at(ingress.size() + p.op_index), p.paddr, p.kind, p.size});
    now_ps_ = t1;
  }

  template <class Sink>
  void emit_writeback(const AccessScript& script, Sink& sink) {
    bool open = false;
    AccessEvent run{};
    std::uint64_t run_end = 0, run_row = 0;
    auto flush = [&] {
      if (open) sink(run);
      open = false;
    };
    script.for_each_writeback_op(layout_.spec(), [&](const AccessOp& op) {
      const auto [vaddr, size] = layout_.element_address(op);
      const std::uint64_t paddr = layout_.virtual_to_physical(vaddr);
      const std::uint64_t rk = row_key(paddr);
      if (opts_.coalesce && open && rk == run_row && run.kind == op.kind && paddr >= run.paddr && paddr <= run_end) {
        run_end = std::max(run_end, paddr + size);
        run.size = static_cast<std::uint32_t>(run_end - run.paddr);
        return;
      }
      flush();
      run = AccessEvent{now_ps_, paddr, op.kind, size};
      run_end = paddr + size;
      run_row = rk;
      open = true;
    });
    flush();
  }

  const MemoryLayout& layout_;
  BandwidthModel bw_;
  Picoseconds start_ps_;
  Picoseconds now_ps_;
  TraceOptions opts_;
  std::uint64_t bits_done_ = 0;
  std::uint64_t message_seq_ = 0;
  std::unordered_map<const void*, Template> cache_;
};

/// Collects the events of a sequence of rounds into one trace.
inline AccessTrace trace_update_processing(const MemoryLayout& layout, std::span<const AccessScript> scripts,
                                           const BandwidthModel& bw, Picoseconds start_ps = 0,
                                           TraceOptions opts = {}) {
  AccessTrace trace;
  TraceBuilder builder(layout, bw, start_ps, opts);
  for (const auto& s : scripts) {
    builder.emit_round(s, [&](const AccessEvent& e) { trace.events.push_back(e); });
  }
  if (!scripts.empty()) {
    trace.meta.first_round = scripts.front().round;
    trace.meta.last_round = scripts.back().round;
  }
  trace.end_ps = builder.now();
  return trace;
}

inline AccessTrace trace_update_processing(const MemoryLayout& layout, const AccessScript& script,
                                           const BandwidthModel& bw, Picoseconds start_ps = 0,
                                           TraceOptions opts = {}) {
  return trace_update_processing(layout, std::span<const AccessScript>(&script, 1), bw, start_ps, opts);
}

// ---------------------------------------------------------------------------
// Trace files

/// `time_ns,paddr_hex,kind,size`; time printed exactly from picoseconds.
inline void write_access_event(std::ostream& os, const AccessEvent& e) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%llu.%03llu,%llx,%s,%u\n", static_cast<unsigned long long>(e.time_ps / 1000),
                static_cast<unsigned long long>(e.time_ps % 1000), static_cast<unsigned long long>(e.paddr),
                e.kind == AccessKind::read ? "R" : "W", e.size);
  os << buf;
}

inline void write_trace_header(std::ostream& os, const TraceMetadata& m) {
  os << "# rounds=" << m.first_round << ".." << m.last_round << " seed=" << m.seed << " config_hash=" << std::hex
     << m.config_hash << std::dec << "\n";
  os << "time_ns,paddr_hex,kind,size\n";
}

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::uint64_t parse_u64(std::string_view s, int base, const std::string& what) {
  if (s.empty()) throw ConfigError("empty " + what);
  std::uint64_t v = 0;
  for (char c : s) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (base == 16 && c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (base == 16 && c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else throw ConfigError("malformed " + what + " '" + std::string(s) + "'");
    if (v > (UINT64_MAX - static_cast<std::uint64_t>(d)) / static_cast<std::uint64_t>(base))
      throw ConfigError(what + " overflows");
    v = v * static_cast<std::uint64_t>(base) + static_cast<std::uint64_t>(d);
  }
  return v;
}

}  // namespace detail

/// Parses one event line; throws ConfigError on malformed input.
inline AccessEvent parse_access_event(std::string_view line) {
  const auto f = detail::split(line, ',');
  if (f.size() != 4) throw ConfigError("trace line needs 4 fields: '" + std::string(line) + "'");
  AccessEvent e;
  const auto dot = f[0].find('.');
  const auto ns = detail::parse_u64(f[0].substr(0, dot), 10, "event time");
  std::uint64_t frac = 0;
  if (dot != std::string_view::npos) {
    auto fs = f[0].substr(dot + 1);
    if (fs.size() > 3) throw ConfigError("event time finer than a picosecond");
    frac = detail::parse_u64(fs, 10, "event time");
    for (std::size_t k = fs.size(); k < 3; ++k) frac *= 10;
  }
  e.time_ps = ns * 1000 + frac;
  e.paddr = detail::parse_u64(f[1], 16, "physical address");
  if (f[2] == "R") e.kind = AccessKind::read;
  else if (f[2] == "W") e.kind = AccessKind::write;
  else throw ConfigError("event kind must be R or W");
  e.size = static_cast<std::uint32_t>(detail::parse_u64(f[3], 10, "event size"));
  return e;
}

inline std::vector<AccessEvent> read_access_trace(std::istream& is) {
  std::vector<AccessEvent> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("time_ns", 0) == 0) continue;
    out.push_back(parse_access_event(line));
  }
  return out;
}

/// Round-record trace: `round,indices` with indices space separated; runs
/// of consecutive indices are written as `a-b` (inclusive).
inline void write_round_record(std::ostream& os, const RoundRecord& r) {
  os << r.round << ',';
  const auto& ix = r.indices;
  for (std::size_t k = 0; k < ix.size();) {
    std::size_t e = k;
    while (e + 1 < ix.size() && ix[e + 1] == ix[e] + 1) ++e;
    if (k > 0) os << ' ';
    os << ix[k];
    if (e > k) os << '-' << ix[e];
    k = e + 1;
  }
  os << '\n';
}

inline RoundRecord parse_round_record(std::string_view line) {
  const auto comma = line.find(',');
  if (comma == std::string_view::npos) throw ConfigError("round record needs 'round,indices'");
  RoundRecord r;
  r.round = detail::parse_u64(line.substr(0, comma), 10, "round number");
  const auto body = line.substr(comma + 1);
  if (!body.empty()) {
    for (auto tok : detail::split(body, ' ')) {
      if (tok.empty()) continue;
      const auto dash = tok.find('-');
      const auto lo = detail::parse_u64(tok.substr(0, dash), 10, "index");
      const auto hi = dash == std::string_view::npos ? lo : detail::parse_u64(tok.substr(dash + 1), 10, "index");
      if (hi < lo || hi > UINT32_MAX) throw ConfigError("bad index range in round record");
      if (!r.indices.empty() && lo <= r.indices.back()) throw ConfigError("round record indices must be increasing");
      for (std::uint64_t i = lo; i <= hi; ++i) r.indices.push_back(static_cast<std::uint32_t>(i));
    }
  }
  return r;
}

inline std::vector<RoundRecord> read_round_records(std::istream& is) {
  std::vector<RoundRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    out.push_back(parse_round_record(line));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Perfectly repeating attacker

struct RowRun {
  std::uint32_t first = 0;  // global parameter index
  std::uint32_t count = 0;
};

/// Accumulator elements grouped by the DRAM row holding them.
inline std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<RowRun>> accumulator_rows(const MemoryLayout& layout) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<RowRun>> rows;
  const auto& spec = layout.spec();
  const std::uint32_t eb = layout.config().accumulator_bytes;
  const std::uint64_t row_bytes = layout.mapping().row_size_bytes;
  for (std::uint32_t l = 0; l < spec.layer_count(); ++l) {
    const auto& reg = layout.region(Region::accumulator, l);
    const std::uint64_t n = spec.layers()[l].element_count;
    std::uint64_t e = 0;
    while (e < n) {
      const std::uint64_t paddr = layout.virtual_to_physical(reg.vstart + e * eb);
      const std::uint64_t room = (row_bytes - paddr % row_bytes) / eb;
      const std::uint64_t take = std::min(n - e, std::max<std::uint64_t>(1, room));
      const auto c = physical_to_dram(paddr, layout.mapping());
      rows[{c.bank, c.row}].push_back(
          {static_cast<std::uint32_t>(spec.layer_offset(l) + e), static_cast<std::uint32_t>(take)});
      e += take;
    }
  }
  return rows;
}

struct AttackerPlan {
  std::vector<std::uint32_t> indices;             // sorted; exactly k entries
  std::vector<DramCoord> victims;                 // one per hammered pair
  std::vector<std::pair<DramCoord, DramCoord>> aggressors;
};

/// Chooses k accumulator indices that sit in rows r-1 and r+1 of the same bank,
/// one victim per bank, so every message double-side hammers each victim.
inline AttackerPlan plan_repeating_attacker(const MemoryLayout& layout, std::size_t k) {
  require(k > 0, "attacker needs at least one index");
  const auto rows = accumulator_rows(layout);
  auto elements = [](const std::vector<RowRun>& runs) {
    std::uint64_t n = 0;
    for (const auto& r : runs) n += r.count;
    return n;
  };
  AttackerPlan plan;
  std::vector<bool> bank_used(layout.mapping().bank_count, false);
  std::size_t need = k;
  for (const auto& [coord, runs_lo] : rows) {
    if (need == 0) break;
    const auto [bank, row_lo] = coord;
    if (bank_used[bank]) continue;
    const auto hi_it = rows.find({bank, row_lo + 2});
    if (hi_it == rows.end()) continue;
    const auto& runs_hi = hi_it->second;
    const std::uint64_t avail_lo = elements(runs_lo), avail_hi = elements(runs_hi);
    std::uint64_t take_lo = std::min<std::uint64_t>(avail_lo, (need + 1) / 2);
    std::uint64_t take_hi = std::min<std::uint64_t>(avail_hi, need - take_lo);
    take_lo = std::min<std::uint64_t>(avail_lo, need - take_hi);
    if (take_lo == 0 || take_hi == 0) continue;
    auto take = [&](const std::vector<RowRun>& runs, std::uint64_t n) {
      for (const auto& r : runs) {
        for (std::uint32_t j = 0; j < r.count && n > 0; ++j, --n) plan.indices.push_back(r.first + j);
      }
    };
    take(runs_lo, take_lo);
    take(runs_hi, take_hi);
    need -= take_lo + take_hi;
    bank_used[bank] = true;
    plan.victims.push_back({bank, row_lo + 1, 0});
    plan.aggressors.push_back({{bank, row_lo, 0}, {bank, row_lo + 2, 0}});
  }
  if (need > 0) throw ConfigError("layout offers too few same-bank accumulator row pairs for the attacker");
  std::sort(plan.indices.begin(), plan.indices.end());
  return plan;
}

}  // namespace hammersim
