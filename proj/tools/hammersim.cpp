#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hammersim/hammersim.hpp"

namespace {

using hammersim::ExitCode;

int code(ExitCode c) { return static_cast<int>(c); }

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool golden = false;
  std::string baseline;
  std::string trace;
  std::string run_dir;
};

hammersim::ExperimentConfig resolve(const Args& a) {
  hammersim::ExperimentConfig cfg = a.config.empty() ? hammersim::ExperimentConfig{} : hammersim::load_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.out) cfg.out = *a.out;
  cfg.validate();
  return cfg;
}

int run(const std::string& command, const Args& a) {
  hammersim::CommandOptions opts;
  opts.golden = a.golden;
  opts.trace = a.trace;
  if (!a.baseline.empty()) {
    if (a.baseline != "random") throw hammersim::ConfigError("--baseline accepts only 'random'");
    opts.random_baseline = true;
  }
  if (command == "report") {
    std::string dir = a.run_dir;
    if (dir.empty()) dir = a.out ? *a.out : resolve(a).out;
    const auto r = hammersim::cmd_report(dir);
    std::cout << r.text;
    return code(ExitCode::ok);
  }
  const auto cfg = resolve(a);
  if (command == "feasibility") {
    try {
      const auto r = hammersim::cmd_feasibility(cfg, opts);
      std::cout << hammersim::feasibility_text(r.report);
      if (a.golden) std::cout << "golden: ok\n";
    } catch (const hammersim::GoldenMismatch& e) {
      std::ifstream in(std::filesystem::path(cfg.out) / "feasibility.txt");
      std::cout << in.rdbuf();
      std::cerr << "hammersim: " << e.what() << "\n";
      return code(ExitCode::golden_mismatch);
    }
  } else if (command == "train") {
    const auto r = hammersim::cmd_train(cfg, opts);
    std::printf("window [%zu, %zu)  final RUR %.4f  reward %.4f -> %.4f  mean CD %.4f\n", r.result.window.i,
                r.result.window.j, r.final_rur, r.first_reward, r.final_reward, r.mean_cd);
  } else if (command == "simulate") {
    const auto r = hammersim::cmd_simulate(cfg, opts);
    std::printf("%s: %llu messages, %llu events, %llu ACTs, %zu flips\n", r.source.c_str(),
                static_cast<unsigned long long>(r.messages), static_cast<unsigned long long>(r.events),
                static_cast<unsigned long long>(r.total_acts), r.flips);
    for (std::size_t w = 0; w < r.max_accumulator_acts.size(); ++w)
      std::printf("window %zu: max accumulator-row ACTs %llu (analytic H_max %llu, E[A] %llu)\n", w,
                  static_cast<unsigned long long>(r.max_accumulator_acts[w]),
                  static_cast<unsigned long long>(r.analytic_h_max), static_cast<unsigned long long>(r.analytic_e_act));
  }
  return code(ExitCode::ok);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hammersim: sparse-update Rowhammer feasibility, training and DRAM simulation"};
  app.require_subcommand(1);
  Args a;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", a.config, "INI experiment config")->check(CLI::ExistingFile);
    sub->add_option("--seed", a.seed, "root seed (overrides [run] seed)");
    sub->add_option("--out", a.out, "output directory (overrides [run] out)");
  };
  auto* feas = app.add_subcommand("feasibility", "analytic H_max / E[A] tables and verdicts");
  common(feas);
  feas->add_flag("--golden", a.golden, "exit 2 unless the bundled reference rows are reproduced");
  auto* train = app.add_subcommand("train", "train the observation agent against the desk federation");
  common(train);
  train->add_option("--baseline", a.baseline, "'random' for uniform perturbations without learning");
  auto* sim = app.add_subcommand("simulate", "replay an update stream through the memory layout and DRAM model");
  common(sim);
  sim->add_option("--trace", a.trace, "round-record file (overrides [simulate] source)");
  auto* rep = app.add_subcommand("report", "merge the manifests of a run directory");
  common(rep);
  rep->add_option("dir", a.run_dir, "run directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : code(ExitCode::usage);
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, a);
  } catch (const hammersim::ConfigError& e) {
    std::cerr << "hammersim: " << e.what() << "\n";
    return code(ExitCode::usage);
  } catch (const std::exception& e) {
    std::cerr << "hammersim: " << e.what() << "\n";
    return code(ExitCode::runtime);
  }
}
