#ifndef HOMOGLAB_TOOLS_CONFIG_HPP
#define HOMOGLAB_TOOLS_CONFIG_HPP

#include "homoglab/coefficients.hpp"
#include "homoglab/core.hpp"
#include "homoglab/scales.hpp"

#include <limits>
#include <string>
#include <vector>

namespace homoglab::cli {

inline constexpr int kSchemaVersion = 1;

/// Parse or validation failure with a 1-based source position (0 when unknown).
class ConfigParseError : public ConfigError {
 public:
  ConfigParseError(const std::string& msg, int line, int column);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

struct ScheduleSpec {
  std::string type = "geometric";  // geometric | explicit | power
  double eps1 = 0.25;
  std::vector<double> prefix;      // explicit: eps_1..eps_p
  double tail_ratio = 0.5;
  std::vector<double> increments;  // power
  double tail_increment = 1.0;
  int horizon = scales::kDefaultHorizon;
};

/// B_0 = mean + base_amplitude sin(2 pi x_1); two_scale adds
/// amplitude cos(2 pi y_1); weierstrass adds tau^k cos(2 pi y_k) / (2 pi).
struct HierarchySpec {
  int dim = 1;
  std::string family = "weierstrass";  // base | two_scale | weierstrass
  double mean = 2.0;
  double base_amplitude = 0.5;
  double amplitude = 0.5;
  double tau = 0.25;
  int levels = -1;  // weierstrass: < 0 infinite
};

struct DeltaSpec {
  std::vector<double> prefix;
  std::string tail = "geometric";  // zero | geometric | power
  double c = 1.0;
  double tau = 0.25;
  double p = 3.0;
  double shift = 0.0;
};

struct SolverSpec {
  int panels = 65536;
  int homogenized_panels = 256;
  int resolve_panels = 16;
  int truncate = 4;
  int cell_n = 0;
  int slow_n = 0;
  int grid_limit = 512;
  std::vector<int> grids{8, 16, 32, 64};
  double rtol = 1e-10;
  double tol = 1e-10;
  std::vector<double> c0{1.0};
  int samples = 100;
  int depth = 20;   // recursion_check n
  int level = -1;   // stability_probe n (< 0: budget)
  double rho = 1.0;
  double T = 64.0;
  double vartheta = 0.5;
  int kmin = 12;
  int dini_samples = 1 << 16;
  double center = 0.5;
  double r0 = 0.25;
  int floor_nodes = 16;
};

struct CheckSpec {
  bool enabled = true;
  double slope_min = 0.9;
  double slope_max = std::numeric_limits<double>::infinity();
  double r2_min = 0.98;
  double predictor_spread = 4.0;  // <= 0 disables
  double variation_max = 2.0;
  double converged_tol = 1e-8;
  double closed_tol = 1e-10;
  double tail_max = 1e-3;
  int tail_at = 20;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string kind;
  std::string id;
  ScheduleSpec schedule;
  HierarchySpec hierarchy;
  DeltaSpec delta;
  std::vector<double> values;  // sweep.values
  SolverSpec solver;
  CheckSpec checks;
  std::string output;          // default output directory
};

const std::vector<std::string>& kinds();

/// Defaults that depend on the kind (sweep values, check thresholds).
ExperimentConfig defaults_for(const std::string& kind);

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Full config with every default filled in; parses back to the same config.
std::string to_yaml(const ExperimentConfig& cfg);

/// Config keys and CSV columns of every kind.
std::string schema_text();

scales::ScaleSchedule build_schedule(const ScheduleSpec& s);
/// eps1 / tau overrides apply to sweeps (NaN keeps the configured value).
coeff::Hierarchy build_hierarchy(const ExperimentConfig& cfg, double eps1 = std::numeric_limits<double>::quiet_NaN(),
                                 double tau = std::numeric_limits<double>::quiet_NaN());
coeff::DeltaSequence build_delta(const DeltaSpec& d);

/// Builds every object the kind needs; throws ConfigParseError on bad values.
void validate(const ExperimentConfig& cfg);

}  // namespace homoglab::cli

#endif  // HOMOGLAB_TOOLS_CONFIG_HPP
