#ifndef HOMOGLAB_RATES_HPP
#define HOMOGLAB_RATES_HPP

#include "homoglab/bvp.hpp"
#include "homoglab/coefficients.hpp"
#include "homoglab/reiterate.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace homoglab::rates {

/// Source and Dirichlet data shared by every point of a sweep.
struct Data {
  bvp::ScalarFn f = [](const Vec&) { return 1.0; };
  bvp::ScalarFn g = [](const Vec&) { return 0.0; };
};

struct SweepOptions {
  int truncate = 4;          // layers kept in both problems (capped by the nesting budget)
  int panels = 65536;        // 1D quadrature panels for u_eps
  int homogenized_panels = 256;
  int resolve_panels = 16;   // layer k is resolved iff panels * eps_k >= resolve_panels
  int grid_limit = 512;      // 2D: largest N before a point is skipped
  double c0 = 1.0;           // C_0 in Lambda
  reit::EvaluatorOptions evaluator;
  unsigned threads = 1;      // sweep points in parallel
  std::string cache_dir;     // 2D: persisted A_n^0 tables, keyed by hierarchy fingerprint
};

struct RatePoint {
  double parameter = 0.0;
  double error = 0.0;          // |u_eps - u_0|_{L^2}
  double predictor = 0.0;      // Lambda [delta]_1 sup eps_k / eps_{k-1}
  double empirical_c = 0.0;    // error / predictor
  int levels = 0;              // n
  int resolved_levels = 0;     // fast layers resolved on the grid; the rest are homogenized
  double tail = 0.0;           // sum_{l > n} delta_l of the family
  int resolution = 0;          // panels (1D) or N (2D)
  bool skipped = false;
  std::string note;
};

struct RateReport {
  std::string parameter_name;
  std::vector<RatePoint> points;  // sorted by parameter
  bool slope_defined = false;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double c_min = 0.0;
  double c_max = 0.0;
  bool predictor_pass = false;    // empirical C within a factor 4 across the sweep
  std::vector<std::string> warnings;
};

struct OscillatingSolve {
  bvp::FieldSolution u;
  int levels = 0;
  int resolved_levels = 0;
  bool skipped = false;  // eps_1 itself below the grid
  std::string note;
};
/// u_eps in d = 1 on opt.panels panels. Layers finer than the grid are
/// replaced by the intermediate matrix A_n^k of the last resolved level k.
OscillatingSolve solve_oscillating_1d(const reit::IntermediateEvaluator& ev, const Data& data,
                                     const SweepOptions& opt);

/// |u_eps - u_0| for one hierarchy (d = 1 exact quadrature, d = 2 finite differences).
RatePoint evaluate_point(const coeff::Hierarchy& h, const Data& data, const SweepOptions& opt);

using Family = std::function<coeff::Hierarchy(double parameter)>;

/// Evaluates a family over the parameter list and fits log(error) against log(parameter).
RateReport sweep(const Family& family, std::vector<double> parameters, const Data& data,
                 const SweepOptions& opt, const std::string& parameter_name);

/// eps_1 sweep with geometric schedules; needs >= 3 values, all <= 1/2.
RateReport rate_sweep(const Family& family, std::vector<double> eps1, const Data& data, const SweepOptions& opt = {});
/// tau sweep at fixed ratio; needs >= 3 values in (0, 1/2].
RateReport weierstrass_tau_sweep(const Family& family, std::vector<double> taus, const Data& data,
                                 const SweepOptions& opt = {});

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};
/// Least squares y = slope x + intercept.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// Empirical C = error / predictor per point; pass iff C stays within a
/// factor `spread` over the points with nonzero error (or all errors vanish).
void predictor_compare(RateReport& report, double spread = 4.0);

/// Columns parameter,error,predictor,empirical_C.
void write_csv(std::ostream& os, const RateReport& report);

}  // namespace homoglab::rates

#endif  // HOMOGLAB_RATES_HPP
