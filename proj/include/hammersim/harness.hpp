#pragma once

// Command implementations behind the hammersim CLI. Every command writes its
// outputs plus `<command>.manifest.json` into the run directory; all of those
// files are deterministic for a given config and seed. Wall-clock time goes
// to a `<command>.timing.json` sidecar.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hammersim/attack.hpp"
#include "hammersim/config.hpp"
#include "hammersim/dram.hpp"
#include "hammersim/memmap.hpp"
#include "hammersim/metrics.hpp"

namespace hammersim {

using Json = nlohmann::ordered_json;

enum class ExitCode : int { ok = 0, usage = 1, golden_mismatch = 2, runtime = 3 };

/// Raised by a command whose golden comparison failed; outputs are still written.
class GoldenMismatch : public Error {
 public:
  using Error::Error;
};

struct CommandOptions {
  bool golden = false;
  bool random_baseline = false;
  std::string trace;  // overrides simulate.trace
};

namespace detail {

namespace fs = std::filesystem;

inline fs::path prepare_out(const ExperimentConfig& cfg) {
  fs::path out(cfg.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw ConfigError("cannot create output directory '" + cfg.out + "': " + ec.message());
  return out;
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot write '" + p.string() + "'");
  os << text;
}

inline std::string manifest_name(const std::string& command) { return command + ".manifest.json"; }

class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_;
};

inline void write_manifest(const fs::path& out, const std::string& command, const ExperimentConfig& cfg,
                           const std::vector<std::string>& files, const Json& summary, const Stopwatch& clock) {
  Json m;
  m["command"] = command;
  m["artifact_version"] = std::string(kVersion);
  m["seed"] = cfg.seed;
  m["config_hash"] = hex64(config_hash(cfg));
  m["outputs"] = files;
  m["summary"] = summary;
  Json cfg_lines = Json::object();
  std::istringstream lines(canonical_config(cfg));
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    if (line.rfind("run.out=", 0) == 0) continue;
    cfg_lines[line.substr(0, eq)] = line.substr(eq + 1);
  }
  m["config"] = cfg_lines;
  write_text(out / manifest_name(command), m.dump(2) + "\n");

  Json t;
  t["command"] = command;
  t["manifest"] = manifest_name(command);
  t["wall_clock_s"] = clock.seconds();
  write_text(out / (command + ".timing.json"), t.dump(2) + "\n");
}

inline std::string header_comment(const std::string& command, const ExperimentConfig& cfg) {
  return "# manifest=" + manifest_name(command) + " seed=" + std::to_string(cfg.seed) +
         " config_hash=" + hex64(config_hash(cfg)) + "\n";
}

inline std::string fmt_k(std::uint64_t v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << static_cast<double>(v) / 1000.0 << "K";
  return s.str();
}

inline std::string fmt_fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// feasibility

struct GoldenCheck {
  std::string what;
  std::string expected;
  std::string actual;
  bool pass = false;
};

/// Golden comparison against the published rows: H_max rounded to the nearest
/// 1K must match exactly, E[A] within 1K after rounding, verdicts exactly.
inline std::vector<GoldenCheck> golden_checks(const FeasibilityReport& rep) {
  std::vector<GoldenCheck> out;
  const auto& ref = reference_rows();
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const auto& r = ref[i];
    const FeasibilityRow* row = nullptr;
    for (const auto& x : rep.rows)
      if (x.model == r.model && x.sparsity == r.sparsity) row = &x;
    const std::string tag = r.model + " @" + detail::fmt_fixed(r.sparsity * 100.0, 2) + "%";
    if (!row) {
      out.push_back({tag + " present", "row", "missing", false});
      continue;
    }
    const auto hk = nearest_k(row->h_max);
    out.push_back({tag + " H_max", std::to_string(r.h_max_k) + "K", std::to_string(hk) + "K", hk == r.h_max_k});
    const auto ek = nearest_k(row->e_act);
    const auto diff = ek > r.e_act_k ? ek - r.e_act_k : r.e_act_k - ek;
    out.push_back({tag + " E[A]", std::to_string(r.e_act_k) + "K±1K", std::to_string(ek) + "K", diff <= 1});
    out.push_back({tag + " verdict", to_string(r.verdict), to_string(row->verdict), row->verdict == r.verdict});
  }
  return out;
}

inline Json feasibility_json(const FeasibilityReport& rep, const DramConfig& dram) {
  Json j;
  j["bandwidth"] = {{"data_rate_mts", dram.bandwidth.data_rate_mts},
                    {"bit_width", dram.bandwidth.bit_width},
                    {"bytes_per_second", rep.bandwidth_bytes_per_s},
                    {"bytes_per_second_decimal_reading", rep.bandwidth_decimal_bytes_per_s},
                    {"refresh_window_ps", dram.refresh_ps()},
                    {"window_bytes", rep.window_bytes}};
  j["activation_cap"] = rep.act_cap;
  j["thresholds"] = {{"minimum", rep.thresholds.minimum},
                     {"exact_mean", rep.thresholds.exact_mean},
                     {"average", rep.thresholds.average}};
  Json t1 = Json::array();
  std::vector<std::string> seen;
  for (const auto& r : rep.rows) {
    if (std::find(seen.begin(), seen.end(), r.model) != seen.end()) continue;
    seen.push_back(r.model);
    const auto& preset = find_preset(r.model);
    Json row;
    row["model"] = r.model;
    row["params"] = preset.total_params;
    row["tensors"] = preset.tensors;
    row["precision_bits"] = preset.precision_bits;
    for (const auto& x : rep.rows)
      if (x.model == r.model) row["h_max_p" + detail::fmt_fixed(x.sparsity * 100.0, 2)] = x.h_max;
    t1.push_back(row);
  }
  j["table_hmax"] = t1;
  Json t3 = Json::array();
  for (const auto& r : rep.rows) {
    Json row;
    row["model"] = r.model;
    row["sparsity"] = r.sparsity;
    row["k"] = r.k;
    row["update_bytes"] = r.update_bytes;
    row["h_max"] = r.h_max;
    row["h_max_exceeds_cap"] = r.h_max_exceeds_cap;
    row["rur"] = r.rur;
    row["e_act"] = r.e_act;
    row["verdict"] = to_string(r.verdict);
    Json pp = Json::array();
    for (const auto& [entry, reached] : r.per_pattern) {
      char pat[8];
      std::snprintf(pat, sizeof pat, "%02X/%02X", entry.victim, entry.aggressor);
      pp.push_back({{"pattern", pat}, {"threshold", entry.count}, {"reached", reached}});
    }
    row["per_pattern"] = pp;
    t3.push_back(row);
  }
  j["table_activations"] = t3;
  return j;
}

inline std::string feasibility_text(const FeasibilityReport& rep) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "bandwidth %.1f B/s (decimal reading %.1f B/s), %.1f bytes per refresh window\n",
                rep.bandwidth_bytes_per_s, rep.bandwidth_decimal_bytes_per_s, rep.window_bytes);
  os << buf;
  std::snprintf(buf, sizeof buf, "activation cap %llu per bank per window; thresholds min %llu, mean %.1f -> %llu\n\n",
                static_cast<unsigned long long>(rep.act_cap), static_cast<unsigned long long>(rep.thresholds.minimum),
                rep.thresholds.exact_mean, static_cast<unsigned long long>(rep.thresholds.average));
  os << buf;
  std::snprintf(buf, sizeof buf, "%-18s %8s %6s %10s %10s %10s %6s %10s  %s\n", "model", "p", "k", "S_bytes", "H_max",
                "H_max(K)", "RUR", "E[A]", "verdict");
  os << buf;
  for (const auto& r : rep.rows) {
    std::snprintf(buf, sizeof buf, "%-18s %7.2f%% %6zu %10.1f %10llu %10s %5.1f%% %10s  %s%s\n", r.model.c_str(),
                  r.sparsity * 100.0, r.k, r.update_bytes, static_cast<unsigned long long>(r.h_max),
                  detail::fmt_k(r.h_max).c_str(), r.rur * 100.0, detail::fmt_k(r.e_act).c_str(),
                  to_string(r.verdict).c_str(), r.h_max_exceeds_cap ? " (H_max above ACT cap)" : "");
    os << buf;
  }
  return os.str();
}

struct FeasibilityOutcome {
  FeasibilityReport report;
  std::vector<GoldenCheck> golden;
  bool golden_ok = true;
};

inline FeasibilityOutcome cmd_feasibility(const ExperimentConfig& cfg, const CommandOptions& opts = {}) {
  detail::Stopwatch clock;
  const auto thresholds = load_thresholds(cfg);
  const auto inputs = reference_inputs();
  FeasibilityOutcome res;
  res.report = build_feasibility_report(inputs, cfg.dram.dram, thresholds, cfg.metrics.metadata_bytes_per_entry,
                                        cfg.metrics.threshold_quantum);
  res.golden = golden_checks(res.report);
  for (const auto& g : res.golden) res.golden_ok &= g.pass;

  const auto out = detail::prepare_out(cfg);
  Json j = feasibility_json(res.report, cfg.dram.dram);
  j["manifest"] = detail::manifest_name("feasibility");
  Json g = Json::array();
  for (const auto& c : res.golden) g.push_back({{"check", c.what}, {"expected", c.expected}, {"actual", c.actual}, {"pass", c.pass}});
  j["golden"] = g;
  detail::write_text(out / "feasibility.json", j.dump(2) + "\n");

  std::string text = detail::header_comment("feasibility", cfg) + feasibility_text(res.report);
  if (opts.golden) {
    text += "\ngolden checks:\n";
    for (const auto& c : res.golden)
      text += std::string(c.pass ? "  ok    " : "  FAIL  ") + c.what + ": expected " + c.expected + ", got " + c.actual + "\n";
  }
  detail::write_text(out / "feasibility.txt", text);

  Json summary;
  summary["rows"] = res.report.rows.size();
  summary["golden_ok"] = res.golden_ok;
  std::size_t feasible = 0;
  for (const auto& r : res.report.rows) feasible += r.verdict == Verdict::feasible;
  summary["feasible_rows"] = feasible;
  detail::write_manifest(out, "feasibility", cfg, {"feasibility.json", "feasibility.txt"}, summary, clock);
  if (opts.golden && !res.golden_ok) throw GoldenMismatch("feasibility output differs from the published tables");
  return res;
}

// ---------------------------------------------------------------------------
// train

struct TrainOutcome {
  TrainResult result;
  double final_rur = 0.0;          // mean per-episode RUR over the last 10% of iterations
  double first_reward = 0.0;       // mean reward over the first 10%
  double final_reward = 0.0;       // mean reward over the last 10%
  double mean_cd = 0.0;
};

inline TrainOutcome cmd_train(const ExperimentConfig& cfg, const CommandOptions& opts = {}) {
  detail::Stopwatch clock;
  const auto out = detail::prepare_out(cfg);
  const std::string prefix = opts.random_baseline ? "baseline" : "train";
  std::ostringstream log;
  log << detail::header_comment(prefix, cfg);
  write_training_log_header(log);
  TrainOptions to;
  to.random_baseline = opts.random_baseline;
  to.on_iteration = [&](const IterationLog& l) { write_training_log_row(log, l); };
  TrainOutcome res;
  res.result = train_agent(cfg, to);

  const auto& L = res.result.log;
  const std::size_t tail = std::max<std::size_t>(1, L.size() / 10);
  for (std::size_t i = 0; i < tail && i < L.size(); ++i) {
    res.first_reward += L[i].mean_reward / static_cast<double>(tail);
    res.final_rur += L[L.size() - 1 - i].rur / static_cast<double>(tail);
    res.final_reward += L[L.size() - 1 - i].mean_reward / static_cast<double>(tail);
  }
  const std::size_t M = mlp_model_spec(cfg.federation.mlp_shape()).total_params();
  for (const auto& r : res.result.records) res.mean_cd += compute_cd(r.indices, M).density;
  if (!res.result.records.empty()) res.mean_cd /= static_cast<double>(res.result.records.size());

  std::vector<std::string> files{prefix + "_log.csv", prefix + "_rounds.txt"};
  detail::write_text(out / files[0], log.str());
  std::ostringstream rounds;
  rounds << detail::header_comment(prefix, cfg);
  for (const auto& r : res.result.records) write_round_record(rounds, r);
  detail::write_text(out / files[1], rounds.str());
  if (!opts.random_baseline) {
    files.push_back("agent.hsck");
    detail::write_text(out / files.back(), encode_checkpoint(res.result.policy, config_hash(cfg)));
  }

  Json summary;
  summary["mode"] = opts.random_baseline ? "random_baseline" : "ppo";
  summary["iterations"] = L.size();
  summary["rounds"] = res.result.records.size();
  summary["total_params"] = M;
  summary["target_window"] = {res.result.window.i, res.result.window.j};
  summary["final_rur"] = res.final_rur;
  summary["overall_rur"] = L.empty() ? 0.0 : L.back().rur_so_far;
  summary["first_reward"] = res.first_reward;
  summary["final_reward"] = res.final_reward;
  summary["mean_cluster_density"] = res.mean_cd;
  detail::write_manifest(out, prefix, cfg, files, summary, clock);
  return res;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOutcome {
  std::string source;
  std::uint64_t events = 0;
  std::uint64_t messages = 0;
  std::uint64_t total_acts = 0;
  std::vector<std::uint64_t> max_accumulator_acts;  // per complete window
  std::uint64_t analytic_h_max = 0;
  double rur = 1.0;
  std::uint64_t analytic_e_act = 0;
  double ratio = 0.0;  // worst complete window's max over analytic E[A]
  std::size_t flips = 0;
  std::vector<WindowSummary> windows;
};

inline SimulateOutcome cmd_simulate(const ExperimentConfig& cfg, const CommandOptions& opts = {}) {
  detail::Stopwatch clock;
  const auto thresholds = load_thresholds(cfg);
  SimulationConfig sim_cfg = cfg.dram;
  sim_cfg.mapping = cfg.mapping;
  const auto& S = cfg.simulate;
  const bool synthetic = opts.trace.empty() && S.source == "synthetic";

  ModelSpec spec;
  std::vector<RoundRecord> records;
  if (synthetic) {
    spec = preset_model_spec(find_preset(S.model));
  } else {
    const std::string path = opts.trace.empty() ? S.trace : opts.trace;
    if (path.empty()) throw ConfigError("simulate: no round-record trace given");
    std::ifstream in(path);
    if (!in) throw ConfigError("simulate: cannot open trace '" + path + "'");
    records = read_round_records(in);
    spec = mlp_model_spec(cfg.federation.mlp_shape());
    for (const auto& r : records)
      for (auto i : r.indices)
        if (i >= spec.total_params()) throw TraceError("simulate: index " + std::to_string(i) + " outside the model");
  }
  const auto layout = build_layout(spec, cfg.mapping, cfg.layout, derive_seed(cfg.seed, "layout"));
  DramSimulator sim(sim_cfg, thresholds, derive_seed(cfg.seed, "vulnerability"));
  TraceBuilder builder(layout, sim_cfg.dram.bandwidth, 0, TraceOptions{S.coalesce});

  const auto out = detail::prepare_out(cfg);
  std::ostringstream trace;
  trace << detail::header_comment("simulate", cfg);
  write_trace_header(trace, TraceMetadata{0, 0, cfg.seed, config_hash(cfg)});
  SimulateOutcome res;
  res.source = synthetic ? "synthetic" : "trace";
  auto sink = [&](const AccessEvent& e) {
    if (res.events < S.max_trace_events) write_access_event(trace, e);
    ++res.events;
    sim.access(e);
  };

  const Picoseconds window = sim_cfg.dram.refresh_ps();
  std::size_t complete_windows = 0;
  double update_bytes = 0.0;
  if (synthetic) {
    const std::size_t k = sparse_k(S.sparsity, spec.total_params());
    const auto plan = plan_repeating_attacker(layout, k);
    auto indices = std::make_shared<const std::vector<std::uint32_t>>(plan.indices);
    const std::uint64_t bits = payload_bits(spec, plan.indices, cfg.federation.metadata_bits_per_entry);
    update_bytes = static_cast<double>(bits) / 8.0;
    AccessScript script;
    for (std::size_t m = 0; m < S.messages_per_round; ++m)
      script.messages.push_back({static_cast<std::uint32_t>(m), bits, indices});
    script.writeback_indices = plan.indices;
    const Picoseconds end = window * S.windows;
    for (std::uint64_t round = 0; builder.now() < end; ++round) {
      script.round = round;
      builder.emit_round(script, sink);
    }
    complete_windows = S.windows;
  } else {
    std::uint64_t bits_total = 0, msgs = 0;
    for (const auto& r : records) {
      auto indices = std::make_shared<const std::vector<std::uint32_t>>(r.indices);
      const std::uint64_t bits = payload_bits(spec, r.indices, cfg.federation.metadata_bits_per_entry);
      AccessScript script;
      script.round = r.round;
      for (std::uint32_t c = 0; c < cfg.federation.n_clients; ++c) script.messages.push_back({c, bits, indices});
      script.writeback_indices = r.indices;
      if (!r.indices.empty()) {
        bits_total += bits * cfg.federation.n_clients;
        msgs += cfg.federation.n_clients;
      }
      builder.emit_round(script, sink);
    }
    update_bytes = msgs ? static_cast<double>(bits_total) / 8.0 / static_cast<double>(msgs) : 0.0;
    complete_windows = builder.now() / window;
    if (records.size() >= 2) res.rur = compute_rur(records);
  }
  sim.finish(builder.now());
  res.messages = builder.messages_emitted();
  res.total_acts = sim.total_acts();
  res.windows = sim.windows();
  res.flips = sim.report().flips.size();

  std::set<std::pair<std::uint32_t, std::uint32_t>> acc_rows;
  for (const auto& [coord, runs] : accumulator_rows(layout)) acc_rows.insert(coord);
  std::uint64_t max_any = 0;
  for (const auto& w : res.windows) {
    std::uint64_t mx = 0;
    for (const auto& r : w.rows)
      if (acc_rows.count({r.bank, r.row})) mx = std::max(mx, r.acts);
    max_any = std::max(max_any, mx);
    if (w.index < complete_windows) res.max_accumulator_acts.push_back(mx);
  }
  if (update_bytes > 0.0) {
    res.analytic_h_max = h_max(sim_cfg.dram.bandwidth, window, update_bytes, sim_cfg.dram.act_cap()).updates;
    res.analytic_e_act = expected_activations(res.rur, res.analytic_h_max);
  }
  if (res.analytic_e_act > 0) {
    const std::uint64_t measured = res.max_accumulator_acts.empty()
                                       ? max_any
                                       : *std::min_element(res.max_accumulator_acts.begin(), res.max_accumulator_acts.end());
    res.ratio = static_cast<double>(measured) / static_cast<double>(res.analytic_e_act);
  }

  detail::write_text(out / "simulate_trace.csv", trace.str());
  std::ostringstream acts;
  acts << detail::header_comment("simulate", cfg) << "window,bank,row,acts,accumulator\n";
  for (const auto& w : res.windows)
    for (const auto& r : w.rows)
      acts << w.index << ',' << r.bank << ',' << r.row << ',' << r.acts << ',' << (acc_rows.count({r.bank, r.row}) ? 1 : 0)
           << '\n';
  detail::write_text(out / "simulate_acts.csv", acts.str());
  std::ostringstream flips;
  flips << detail::header_comment("simulate", cfg);
  write_flip_report(flips, sim.report());
  detail::write_text(out / "simulate_flips.csv", flips.str());
  std::ostringstream lay;
  lay << detail::header_comment("simulate", cfg);
  write_layout_dump(lay, layout);
  detail::write_text(out / "simulate_layout.csv", lay.str());

  Json summary;
  summary["source"] = res.source;
  summary["model"] = synthetic ? find_preset(S.model).name : std::string("federation-mlp");
  summary["messages"] = res.messages;
  summary["events"] = res.events;
  summary["trace_events_written"] = std::min<std::uint64_t>(res.events, S.max_trace_events);
  summary["total_acts"] = res.total_acts;
  summary["update_bytes"] = update_bytes;
  summary["rur"] = res.rur;
  summary["analytic_h_max"] = res.analytic_h_max;
  summary["analytic_e_act"] = res.analytic_e_act;
  summary["complete_windows"] = complete_windows;
  summary["max_accumulator_acts_per_window"] = res.max_accumulator_acts;
  summary["max_accumulator_acts_any_window"] = max_any;
  summary["measured_over_analytic"] = res.ratio;
  summary["flips"] = res.flips;
  Json wins = Json::array();
  for (const auto& w : res.windows) wins.push_back({{"index", w.index}, {"total_acts", w.total_acts}, {"rows", w.rows.size()}});
  summary["windows"] = wins;
  summary["manifest"] = detail::manifest_name("simulate");
  detail::write_text(out / "simulate.json", summary.dump(2) + "\n");
  detail::write_manifest(out, "simulate", cfg,
                         {"simulate.json", "simulate_trace.csv", "simulate_acts.csv", "simulate_flips.csv", "simulate_layout.csv"},
                         summary, clock);
  return res;
}

// ---------------------------------------------------------------------------
// report

struct ReportOutcome {
  std::vector<std::string> sections;
  std::string text;
  Json json;
};

inline ReportOutcome cmd_report(const std::string& run_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(run_dir)) throw ConfigError("report: '" + run_dir + "' is not a directory");
  std::map<std::string, Json> manifests;
  const std::vector<std::string> known{"feasibility", "train", "baseline", "simulate"};
  for (const auto& name : known) {
    const fs::path p = fs::path(run_dir) / detail::manifest_name(name);
    if (!fs::exists(p)) continue;
    std::ifstream in(p);
    try {
      manifests[name] = Json::parse(in);
    } catch (const Json::exception& e) {
      throw ConfigError("report: cannot parse " + p.string() + ": " + e.what());
    }
  }
  if (manifests.empty()) throw ConfigError("report: no manifests in '" + run_dir + "'");
  std::string hash;
  for (const auto& [name, m] : manifests) {
    const std::string h = m.value("config_hash", "");
    if (hash.empty()) hash = h;
    else if (h != hash) throw ConfigError("report: conflicting config hashes (" + hash + " vs " + h + " in " + name + ")");
  }

  ReportOutcome res;
  std::ostringstream os;
  os << "# config_hash=" << hash << "\n";
  res.json["config_hash"] = hash;
  Json sections = Json::object();
  std::uint64_t analytic_e = 0, simulated = 0;
  for (const auto& name : known) {
    if (!manifests.count(name)) continue;
    res.sections.push_back(name);
    const auto& s = manifests[name]["summary"];
    sections[name] = s;
    os << "\n[" << name << "]\n";
    if (name == "feasibility") {
      std::ifstream in(fs::path(run_dir) / "feasibility.json");
      if (!in) throw ConfigError("report: feasibility.json missing");
      const Json f = Json::parse(in);
      for (const auto& r : f["table_activations"]) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-18s p=%.2f%%  H_max=%llu  E[A]=%llu  %s\n",
                      r["model"].get<std::string>().c_str(), r["sparsity"].get<double>() * 100.0,
                      static_cast<unsigned long long>(r["h_max"].get<std::uint64_t>()),
                      static_cast<unsigned long long>(r["e_act"].get<std::uint64_t>()),
                      r["verdict"].get<std::string>().c_str());
        os << buf;
      }
      os << "golden_ok=" << (s.value("golden_ok", false) ? "true" : "false") << "\n";
    } else if (name == "train" || name == "baseline") {
      os << "mode=" << s.value("mode", "") << " iterations=" << s.value("iterations", 0)
         << " final_rur=" << detail::fmt_fixed(s.value("final_rur", 0.0), 4)
         << " first_reward=" << detail::fmt_fixed(s.value("first_reward", 0.0), 4)
         << " final_reward=" << detail::fmt_fixed(s.value("final_reward", 0.0), 4)
         << " mean_cd=" << detail::fmt_fixed(s.value("mean_cluster_density", 0.0), 4) << "\n";
    } else if (name == "simulate") {
      analytic_e = s.value("analytic_e_act", std::uint64_t{0});
      const auto& per = s["max_accumulator_acts_per_window"];
      simulated = per.empty() ? s.value("max_accumulator_acts_any_window", std::uint64_t{0}) : per[0].get<std::uint64_t>();
      for (const auto& v : per) simulated = std::min(simulated, v.get<std::uint64_t>());
      os << "source=" << s.value("source", "") << " analytic_E[A]=" << analytic_e << " simulated_max_row_acts=" << simulated
         << " flips=" << s.value("flips", 0) << "\n";
    }
  }
  if (manifests.count("train") && manifests.count("baseline")) {
    const double t = manifests["train"]["summary"].value("final_rur", 0.0);
    const double b = manifests["baseline"]["summary"].value("final_rur", 0.0);
    const double ratio = b > 0.0 ? t / b : 0.0;
    os << "\n[learning]\ntrained_over_random_rur=" << detail::fmt_fixed(ratio, 4) << "\n";
    res.json["trained_over_random_rur"] = ratio;
  }
  if (manifests.count("simulate") && analytic_e > 0) {
    const double ratio = static_cast<double>(simulated) / static_cast<double>(analytic_e);
    const ThresholdSummary th = summarize_thresholds(ThresholdTable::defaults());
    const Verdict v = feasibility_verdict(simulated, th);
    os << "\n[cross-check]\nsimulated_over_analytic=" << detail::fmt_fixed(ratio, 4) << " simulated_verdict=" << to_string(v)
       << "\n";
    res.json["simulated_over_analytic"] = ratio;
    res.json["simulated_verdict"] = to_string(v);
  }
  res.json["sections"] = sections;
  res.text = os.str();
  detail::write_text(fs::path(run_dir) / "report.txt", res.text);
  detail::write_text(fs::path(run_dir) / "report.json", res.json.dump(2) + "\n");
  return res;
}

}  // namespace hammersim
