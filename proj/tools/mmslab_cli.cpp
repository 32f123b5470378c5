#include "mmslab/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Scenario runner for flows on metric measure spaces"};
  app.require_subcommand(1);
  auto* run = app.add_subcommand("run", "Run the scenario described by a config file");
  std::string config_path, out_dir, cache_dir;
  long seed = -1;
  int threads = 1;
  bool quiet = false;
  run->add_option("config", config_path, "Config file")->required();
  run->add_option("--out", out_dir, "Output directory (overrides the config)");
  run->add_option("--seed", seed, "Seed (overrides the config)")->check(CLI::NonNegativeNumber);
  run->add_option("--threads", threads, "Worker threads (runs are single-threaded; accepted for compatibility)")->check(CLI::PositiveNumber);
  run->add_option("--cache", cache_dir, "Spectral basis cache directory (default $MMS_CACHE)");
  run->add_flag("-q,--quiet", quiet, "Suppress progress output");
  CLI11_PARSE(app, argc, argv);

  try {
    mms::ExperimentConfig cfg = mms::load_experiment_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (seed >= 0) cfg.numerics.seed = static_cast<std::uint64_t>(seed);
    if (!cache_dir.empty()) {
      cfg.cache_dir = cache_dir;
    } else if (const char* env = std::getenv("MMS_CACHE"); env && *env) {
      cfg.cache_dir = env;
    }
    const auto res = mms::run_experiment(cfg, quiet ? nullptr : &std::cerr);
    int failed = 0;
    for (const auto& r : res.rows) failed += r.gated && !r.pass;
    std::cout << (res.pass ? "PASS" : "FAIL") << ": " << res.rows.size() << " rows, " << failed
              << " gate failures; report in " << (res.directory / "report.csv").string() << '\n';
    return res.pass ? 0 : 1;
  } catch (const mms::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
}
