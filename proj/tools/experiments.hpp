#ifndef HOMOGLAB_TOOLS_EXPERIMENTS_HPP
#define HOMOGLAB_TOOLS_EXPERIMENTS_HPP

#include "config.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace homoglab::cli {

struct CheckResult {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  std::string relation;  // ">=", "<=", "=="
  bool pass = false;
};

struct RunOptions {
  unsigned threads = 1;
  std::uint64_t seed = 7;
  std::string cache_dir;  // HOMOGLAB_CACHE
};

struct RunResult {
  std::string csv;
  nlohmann::json summary;
  std::string plot;
  std::vector<CheckResult> checks;
  bool pass = true;
};

/// Numerical failures propagate as homoglab::Error.
RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {});

/// results.csv, summary.json, resolved_config.yaml, schema.txt, plot.gp.
void write_outputs(const std::string& dir, const ExperimentConfig& cfg, const RunResult& result);

}  // namespace homoglab::cli

#endif  // HOMOGLAB_TOOLS_EXPERIMENTS_HPP
