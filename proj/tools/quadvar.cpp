// Command-line front end for the experiment runner.
//
//   quadvar <experiment> --config <path> [--out <path>] [--format csv|json]
//           [--seed <u64>] [--threads <N>] [--timing]
//
// Exit status: 0 when every in-config assertion passes, 1 on an assertion
// failure, 2 on a config or I/O error.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "quadvar/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Quadratic-form variance laboratory"};
  std::string experiment, config_path, out_path, format;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  bool timing = false;
  app.add_option("experiment", experiment, "Experiment name")
      ->required()
      ->check(CLI::IsMember(quadvar::experiment_names()));
  app.add_option("--config", config_path, "Config file (JSON)")->required();
  app.add_option("--out", out_path, "Output file (default: config 'output', else stdout)");
  app.add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  auto* seed_opt = app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");
  app.add_flag("--timing", timing, "Append a wall_seconds column (breaks byte reproducibility)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  quadvar::ExperimentConfig cfg;
  try {
    cfg = quadvar::load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  if (cfg.experiment != experiment) {
    std::cerr << "config error: experiment: config declares '" << cfg.experiment
              << "' but '" << experiment << "' was requested\n";
    return 2;
  }
  if (*seed_opt) quadvar::override_seed(cfg, seed);
  quadvar::set_thread_count(threads);

  std::vector<quadvar::ResultRecord> records;
  try {
    records = quadvar::run(cfg);
  } catch (const quadvar::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  const auto fmt = quadvar::parse_format(format.empty() ? cfg.format : format);
  const std::string target = out_path.empty() ? cfg.output : out_path;
  try {
    if (target.empty() || target == "-")
      std::cout << quadvar::format_records(records, fmt, timing);
    else
      quadvar::emit(records, fmt, target, timing);
  } catch (const std::exception& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  }

  const auto failures = quadvar::check_assertions(cfg, records);
  for (const auto& f : failures)
    std::cerr << "assertion " << f.assertion << " failed: " << f.message << "\n";
  return failures.empty() ? 0 : 1;
}
