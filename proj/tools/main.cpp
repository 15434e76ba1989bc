#include "config.hpp"
#include "experiments.hpp"

#include "homoglab/parallel.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

int config_error(const homoglab::cli::ConfigParseError& e, const std::string& path) {
  std::cerr << path << ": " << e.what() << "\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace homoglab;
  CLI::App app{"homoglab: homogenization experiments with infinitely many scales"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  unsigned threads = default_threads();
  std::uint64_t seed = 7;
  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", config_path, "YAML config")->required();
  run->add_option("--out", out_dir, "output directory (default: config output key, else out/<id>)");
  run->add_option("--threads", threads, "worker threads (1 is bit-reproducible)")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "seed for sampling probes");

  std::string validate_path;
  auto* val = app.add_subcommand("validate", "parse and check a config without running it");
  val->add_option("config", validate_path, "YAML config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (*val) {
    try {
      const auto cfg = cli::load_config(validate_path);
      std::cout << validate_path << ": ok (" << cfg.kind << ", id " << cfg.id << ")\n";
      return 0;
    } catch (const cli::ConfigParseError& e) {
      return config_error(e, validate_path);
    }
  }

  cli::ExperimentConfig cfg;
  try {
    cfg = cli::load_config(config_path);
  } catch (const cli::ConfigParseError& e) {
    return config_error(e, config_path);
  }
  if (out_dir.empty()) out_dir = cfg.output.empty() ? "out/" + cfg.id : cfg.output;

  cli::RunOptions opt;
  opt.threads = threads;
  opt.seed = seed;
  if (const char* cache = std::getenv("HOMOGLAB_CACHE")) opt.cache_dir = cache;

  cli::RunResult result;
  try {
    result = cli::run_experiment(cfg, opt);
    cli::write_outputs(out_dir, cfg, result);
  } catch (const std::exception& e) {
    std::cerr << "experiment " << cfg.id << " failed: " << e.what() << "\n";
    return 3;
  }
  for (const auto& c : result.checks) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.value << " " << c.relation << " " << c.threshold
              << "\n";
  }
  std::cout << cfg.id << ": " << (result.pass ? "pass" : "fail") << " -> " << out_dir << "\n";
  return result.pass ? 0 : 1;
}
