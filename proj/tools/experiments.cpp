#include "experiments.hpp"

#include "homoglab/cell.hpp"
#include "homoglab/rates.hpp"
#include "homoglab/regularity.hpp"
#include "homoglab/reiterate.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace homoglab::cli {

namespace {

using nlohmann::json;

struct Csv {
  std::ostringstream os;
  Csv() { os << std::setprecision(17); }
  template <typename... T>
  void row(const T&... v) {
    bool first = true;
    ((os << (first ? "" : ",") << v, first = false), ...);
    os << "\n";
  }
};

void check(RunResult& r, const std::string& name, double value, const std::string& rel, double threshold) {
  bool pass = false;
  if (rel == ">=") pass = value >= threshold;
  if (rel == "<=") pass = value <= threshold;
  if (rel == "<") pass = value < threshold;
  if (rel == "==") pass = value == threshold;
  r.checks.push_back({name, value, threshold, rel, pass});
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

rates::SweepOptions sweep_options(const ExperimentConfig& cfg, const RunOptions& opt) {
  rates::SweepOptions so;
  const auto& s = cfg.solver;
  so.truncate = s.truncate;
  so.panels = s.panels;
  so.homogenized_panels = s.homogenized_panels;
  so.resolve_panels = s.resolve_panels;
  so.grid_limit = s.grid_limit;
  so.c0 = s.c0.front();
  so.evaluator.cell_n = s.cell_n;
  so.evaluator.slow_n = s.slow_n;
  so.evaluator.cell.rtol = s.rtol;
  so.threads = opt.threads;
  so.cache_dir = opt.cache_dir;
  return so;
}

std::string plot_script(const std::string& xlabel, const std::string& ylabel, bool logx, bool logy,
                        const std::string& plots) {
  std::ostringstream os;
  os << "set datafile separator ','\n"
     << "set key autotitle columnhead\n";
  if (logx) os << "set logscale x\n";
  if (logy) os << "set logscale y\n";
  os << "set xlabel '" << xlabel << "'\n"
     << "set ylabel '" << ylabel << "'\n"
     << "plot " << plots << "\n";
  return os.str();
}

void run_sweep(const ExperimentConfig& cfg, const RunOptions& opt, RunResult& r) {
  const bool tau = cfg.kind == "tau_sweep";
  const auto so = sweep_options(cfg, opt);
  rates::Family family;
  if (tau) {
    family = [&cfg](double t) { return build_hierarchy(cfg, NAN, t); };
  } else {
    family = [&cfg](double e) { return build_hierarchy(cfg, e); };
  }
  const rates::Data data;
  const auto rep = tau ? rates::weierstrass_tau_sweep(family, cfg.values, data, so)
                       : rates::rate_sweep(family, cfg.values, data, so);
  std::ostringstream csv;
  rates::write_csv(csv, rep);
  r.csv = csv.str();

  json pts = json::array();
  for (const auto& p : rep.points) {
    pts.push_back({{"parameter", p.parameter},
                   {"error", p.error},
                   {"predictor", p.predictor},
                   {"empirical_C", p.empirical_c},
                   {"levels", p.levels},
                   {"resolved_levels", p.resolved_levels},
                   {"tail", p.tail},
                   {"resolution", p.resolution},
                   {"skipped", p.skipped},
                   {"note", p.note}});
  }
  r.summary["slope_defined"] = rep.slope_defined;
  r.summary["slope"] = number(rep.slope);
  r.summary["r2"] = number(rep.r2);
  r.summary["metrics"] = {{"parameter", rep.parameter_name},
                          {"intercept", number(rep.intercept)},
                          {"c_min", number(rep.c_min)},
                          {"c_max", number(rep.c_max)},
                          {"predictor_pass", rep.predictor_pass},
                          {"points", pts}};
  r.summary["warnings"] = rep.warnings;

  const auto& c = cfg.checks;
  check(r, "slope_defined", rep.slope_defined ? 1.0 : 0.0, "==", 1.0);
  check(r, "slope_min", rep.slope, ">=", c.slope_min);
  if (std::isfinite(c.slope_max)) check(r, "slope_max", rep.slope, "<=", c.slope_max);
  if (c.r2_min > 0.0) check(r, "r2_min", rep.r2, ">=", c.r2_min);
  if (c.predictor_spread > 0.0) {
    const double spread = rep.c_min > 0.0 ? rep.c_max / rep.c_min : (rep.c_max == 0.0 ? 1.0 : INFINITY);
    check(r, "predictor_spread", spread, "<=", c.predictor_spread);
  }
  r.plot = plot_script(tau ? "tau" : "eps_1", "|u_eps - u_0|_L2", true, true,
                       "'results.csv' using 1:2 with linespoints, '' using 1:3 with lines");
}

void run_lipschitz(const ExperimentConfig& cfg, const RunOptions& opt, RunResult& r) {
  reg::LipschitzOptions lo;
  lo.center = cfg.solver.center;
  lo.r0 = cfg.solver.r0;
  lo.floor_nodes = cfg.solver.floor_nodes;
  lo.solve = sweep_options(cfg, opt);
  const auto rep = reg::lipschitz_probe([&cfg](double e) { return build_hierarchy(cfg, e); }, cfg.values,
                                        rates::Data{}, lo);
  Csv csv;
  csv.row("parameter", "r", "H", "h", "ratio");
  json entries = json::array();
  for (const auto& e : rep.entries) {
    if (!e.profile.fits.empty()) {
      const auto& top = e.profile.fits.back();
      for (const auto& f : e.profile.fits) csv.row(e.parameter, f.r, f.H, f.h, (f.H + f.h) / (top.H + top.h));
    }
    entries.push_back({{"parameter", e.parameter}, {"sup_ratio", number(e.sup_ratio)}, {"floor", e.floor},
                       {"radii", e.profile.fits.size()}, {"note", e.note}});
  }
  r.csv = csv.os.str();
  r.summary["metrics"] = {{"variation", number(rep.variation)}, {"bounded", rep.bounded}, {"entries", entries}};
  check(r, "variation_max", rep.variation, "<=", cfg.checks.variation_max);
  r.plot = plot_script("r", "(H + h)(r) / (H + h)(r0)", true, false, "'results.csv' using 2:5 with points");
}

void run_cell(const ExperimentConfig& cfg, RunResult& r) {
  const auto& h = cfg.hierarchy;
  const int d = h.dim;
  const double m = h.mean, a = h.base_amplitude;
  Mat exact = identity(d) * m;
  exact(0, 0) = std::sqrt(m * m - a * a);
  auto coef = [m, a, d](const Vec& y) { return identity(d) * (m + a * std::sin(kTwoPi * y(0))); };
  cell::CellOptions co;
  co.rtol = cfg.solver.rtol;
  Csv csv;
  csv.row("N", "a11", "a12", "a21", "a22", "error");
  double last = INFINITY;
  json rows = json::array();
  for (int n : cfg.solver.grids) {
    const auto field = cell::MatrixField::sample(d, n, coef);
    const Mat ah = cell::homogenize(field, m - std::abs(a), co);
    const double err = (ah - exact).cwiseAbs().maxCoeff();
    const double a12 = d == 2 ? ah(0, 1) : 0.0, a21 = d == 2 ? ah(1, 0) : 0.0, a22 = d == 2 ? ah(1, 1) : 0.0;
    csv.row(n, ah(0, 0), a12, a21, a22, err);
    rows.push_back({{"N", n}, {"error", err}});
    last = err;
  }
  r.csv = csv.os.str();
  r.summary["metrics"] = {{"closed_form_a11", exact(0, 0)}, {"grids", rows}};
  check(r, "converged_tol", last, "<=", cfg.checks.converged_tol);
  r.plot = plot_script("N", "max entry error", true, true, "'results.csv' using 1:6 with linespoints");
}

void run_recursion(const ExperimentConfig& cfg, RunResult& r) {
  const auto delta = build_delta(cfg.delta);
  Csv csv;
  csv.row("c0", "k", "value", "bound", "margin");
  json per = json::array();
  bool all = true;
  for (double c0 : cfg.solver.c0) {
    const auto st = reit::delta_recursion(delta, cfg.solver.depth, c0);
    double worst = INFINITY;
    for (int k = 0; k <= st.n; ++k) {
      const double margin = st.bound[k] - st.values[k];
      worst = std::min(worst, margin);
      csv.row(c0, k, st.values[k], st.bound[k], margin);
    }
    per.push_back({{"c0", c0}, {"factor", number(st.factor)}, {"min_margin", number(worst)}, {"pass", st.pass},
                   {"overflow", st.overflow}});
    all = all && st.pass;
  }
  r.csv = csv.os.str();
  r.summary["metrics"] = {{"n", cfg.solver.depth}, {"per_c0", per}};
  check(r, "recursion_below_bound", all ? 1.0 : 0.0, "==", 1.0);
  r.plot = plot_script("k", "delta_k^n", false, true,
                       "'results.csv' using 2:3 with points, '' using 2:4 with lines");
}

void run_stability(const ExperimentConfig& cfg, const RunOptions& opt, RunResult& r) {
  const auto h1 = build_hierarchy(cfg);
  reit::EvaluatorOptions eo;
  eo.cell_n = cfg.solver.cell_n;
  eo.slow_n = cfg.solver.slow_n;
  eo.cell.rtol = cfg.solver.rtol;
  Csv csv;
  csv.row("tau", "certified", "measured", "bound", "ratio");
  json rows = json::array();
  bool all = true;
  double worst = 0.0;
  for (double tau : cfg.values) {
    ExperimentConfig shifted = cfg;
    shifted.hierarchy.mean += tau;
    const auto h2 = build_hierarchy(shifted);
    const auto rep = reit::stability_probe(h1, h2, tau, cfg.solver.samples, cfg.solver.level, eo, opt.seed);
    csv.row(tau, rep.certified, rep.measured, rep.bound, rep.ratio);
    rows.push_back({{"tau", tau}, {"mu", rep.mu}, {"n", rep.n}, {"tau_valid", rep.tau_valid}, {"pass", rep.pass}});
    all = all && rep.pass;
    worst = std::max(worst, rep.measured / rep.bound);
  }
  r.csv = csv.os.str();
  r.summary["metrics"] = {{"max_measured_over_bound", worst}, {"points", rows}};
  check(r, "stability_bound", all ? 1.0 : 0.0, "==", 1.0);
  r.plot = plot_script("tau", "|A_hat_1 - A_hat_2|", true, true,
                       "'results.csv' using 1:3 with linespoints, '' using 1:4 with lines");
}

void run_mm(const ExperimentConfig& cfg, RunResult& r) {
  const auto s = build_schedule(cfg.schedule);
  const auto delta = build_delta(cfg.delta);
  const auto& o = cfg.solver;
  const auto mm = reg::mm_series(s, delta, o.rho, o.T, cfg.schedule.horizon);
  Csv csv;
  csv.row("m", "first", "second", "M", "tail");
  bool monotone = true;
  for (std::size_t m = 0; m < mm.M.size(); ++m) {
    csv.row(m, mm.first[m], mm.second[m], mm.M[m], mm.tails[m]);
    if (m > 0 && mm.tails[m] > mm.tails[m - 1]) monotone = false;
  }
  r.csv = csv.os.str();
  json metrics = {{"alpha", mm.alpha},
                  {"T", mm.T},
                  {"m0", mm.m0 ? json(*mm.m0) : json(nullptr)},
                  {"hypothesis_holds", mm.hypothesis_holds},
                  {"divergent", mm.divergent}};
  const bool closed = cfg.schedule.type == "geometric" && cfg.delta.tail != "power";
  if (closed) {
    const auto cf = reg::mm_series(s, delta, o.rho, o.T, cfg.schedule.horizon, true);
    double diff = 0.0;
    for (std::size_t m = 0; m < mm.M.size(); ++m) {
      diff = std::max({diff, std::abs(cf.M[m] - mm.M[m]), std::abs(cf.tails[m] - mm.tails[m])});
    }
    metrics["closed_form_difference"] = diff;
    check(r, "closed_form_agreement", diff, "<=", cfg.checks.closed_tol);
  }
  r.summary["metrics"] = metrics;
  check(r, "m0_finite", mm.m0 ? 1.0 : 0.0, "==", 1.0);
  check(r, "tails_monotone", monotone ? 1.0 : 0.0, "==", 1.0);
  const int at = std::clamp(cfg.checks.tail_at, 0, cfg.schedule.horizon);
  check(r, "tail_max", mm.tails[at], "<", cfg.checks.tail_max);
  r.plot = plot_script("m", "M_m", false, true, "'results.csv' using 1:4 with points, '' using 1:5 with lines");
}

void run_dini(const ExperimentConfig& cfg, RunResult& r) {
  const auto h = build_hierarchy(cfg);
  const auto& o = cfg.solver;
  const auto rep = reg::dini_modulus(h, o.vartheta, o.rho, o.kmin, o.dini_samples, 4, o.tol);
  Csv csv;
  csv.row("r", "omega", "overlay");
  for (std::size_t i = 0; i < rep.r.size(); ++i) csv.row(rep.r[i], rep.omega[i], rep.C * reg::dini_overlay(rep.r[i], rep.rho));
  r.csv = csv.os.str();
  r.summary["metrics"] = {{"C", rep.C},
                          {"integral", rep.integral},
                          {"overlay_integral", rep.overlay_integral},
                          {"levels", rep.levels},
                          {"vartheta_holds", rep.vartheta_holds},
                          {"below_overlay", rep.below_overlay}};
  check(r, "below_overlay", rep.below_overlay ? 1.0 : 0.0, "==", 1.0);
  check(r, "dini_integral", rep.integral, "<", 3.0 * rep.C);
  r.plot = plot_script("r", "omega(r)", true, true, "'results.csv' using 1:2 with points, '' using 1:3 with lines");
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opt) {
  RunResult r;
  r.summary = json::object();
  r.summary["id"] = cfg.id;
  r.summary["kind"] = cfg.kind;
  r.summary["schema_version"] = cfg.schema_version;
  r.summary["seed"] = opt.seed;
  const auto& k = cfg.kind;
  if (k == "rate_sweep" || k == "tau_sweep") {
    run_sweep(cfg, opt, r);
  } else if (k == "lipschitz_probe") {
    run_lipschitz(cfg, opt, r);
  } else if (k == "cell_convergence") {
    run_cell(cfg, r);
  } else if (k == "recursion_check") {
    run_recursion(cfg, r);
  } else if (k == "stability_probe") {
    run_stability(cfg, opt, r);
  } else if (k == "mm_series") {
    run_mm(cfg, r);
  } else if (k == "dini") {
    run_dini(cfg, r);
  } else {
    throw ConfigError("unknown kind " + k);
  }
  json checks = json::array();
  r.pass = true;
  for (const auto& c : r.checks) {
    checks.push_back({{"name", c.name},
                      {"value", number(c.value)},
                      {"threshold", number(c.threshold)},
                      {"relation", c.relation},
                      {"pass", c.pass}});
    r.pass = r.pass && c.pass;
  }
  if (!cfg.checks.enabled) r.pass = true;
  r.summary["checks_enabled"] = cfg.checks.enabled;
  r.summary["checks"] = checks;
  r.summary["pass"] = r.pass;
  if (!r.summary.contains("warnings")) r.summary["warnings"] = json::array();
  return r;
}

void write_outputs(const std::string& dir, const ExperimentConfig& cfg, const RunResult& result) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto write = [&dir](const std::string& name, const std::string& text) {
    std::ofstream out(fs::path(dir) / name);
    if (!out) throw ConfigError("cannot write " + (fs::path(dir) / name).string());
    out << text;
  };
  write("results.csv", result.csv);
  write("summary.json", result.summary.dump(2) + "\n");
  write("resolved_config.yaml", to_yaml(cfg));
  write("schema.txt", schema_text());
  write("plot.gp", result.plot);
}

}  // namespace homoglab::cli
