#include "homoglab/rates.hpp"

#include "homoglab/parallel.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace homoglab::rates {

namespace {

constexpr double kZeroError = 1e-12;

int next_pow2(double v) {
  int n = 16;
  while (n < v) n *= 2;
  return n;
}

}  // namespace

OscillatingSolve solve_oscillating_1d(const reit::IntermediateEvaluator& ev, const Data& data,
                                     const SweepOptions& opt) {
  const auto& h = ev.hierarchy();
  if (h.dim() != 1) throw InputError("solve_oscillating_1d needs d = 1");
  const int n = ev.n();
  const auto& sched = h.schedule();
  OscillatingSolve out;
  out.levels = n;
  int k_res = 0;
  while (k_res < n && opt.panels * sched.epsilon(k_res + 1) >= opt.resolve_panels) ++k_res;
  out.resolved_levels = k_res;
  if (n >= 1 && k_res == 0) {
    out.skipped = true;
    out.note = "eps_1 not resolved by the quadrature grid";
    return out;
  }
  bvp::Problem p;
  p.dim = 1;
  p.f = data.f;
  p.g = data.g;
  p.mu = h.mu();
  if (k_res < n) {
    std::ostringstream os;
    os << "layers " << k_res + 1 << ".." << n << " homogenized through A_n^" << k_res;
    out.note = os.str();
    p.a = [ev, k_res](const Vec& x) { return ev.eval(k_res, coeff::multiscale_point(ev.hierarchy(), x, k_res)); };
  } else {
    p.a = [h, n](const Vec& x) { return coeff::eval_partial_sum(h, n, coeff::multiscale_point(h, x, n)); };
  }
  out.u = bvp::solve_1d_exact(p, opt.panels);
  return out;
}

RatePoint evaluate_point(const coeff::Hierarchy& h, const Data& data, const SweepOptions& opt) {
  const int d = h.dim();
  const int budget = opt.evaluator.budget < 0 ? reit::default_budget(d) : opt.evaluator.budget;
  RatePoint pt;
  const int n = std::min({opt.truncate, h.depth(), budget});
  pt.levels = n;
  pt.tail = n >= h.depth() ? 0.0 : h.delta().tail_sum(n + 1);

  const auto& sched = h.schedule();
  const auto summary = coeff::delta_norm(h, 1.0, {opt.c0});
  const double sup_ratio = scales::separation_sup(sched, sched.horizon());
  pt.predictor = summary.lambda[0] * summary.delta1 * sup_ratio;

  reit::IntermediateEvaluator ev(h, n, opt.evaluator);
  bvp::Problem pe, p0;
  pe.dim = p0.dim = d;
  pe.f = p0.f = data.f;
  pe.g = p0.g = data.g;
  pe.mu = p0.mu = h.mu();

  if (d == 1) {
    pt.resolution = opt.panels;
    auto ue = solve_oscillating_1d(ev, data, opt);
    pt.resolved_levels = ue.resolved_levels;
    pt.note = ue.note;
    if (ue.skipped) {
      pt.skipped = true;
      return pt;
    }
    p0.a = [ev](const Vec& x) { return ev.eval(0, {x}); };
    const auto u0 = bvp::solve_1d_exact(p0, opt.homogenized_panels);
    pt.error = bvp::difference_norm(ue.u, u0, bvp::Norm::L2);
  } else {
    const double finest = n == 0 ? 1.0 : sched.epsilon(n);
    const int grid = next_pow2(8.0 / finest);
    pt.resolution = grid;
    pt.resolved_levels = n;
    if (grid > opt.grid_limit) {
      pt.skipped = true;
      pt.note = "finest retained scale needs N > grid_limit";
      return pt;
    }
    pe.finest_scale = finest;
    pe.a = [&h, n](const Vec& x) { return coeff::eval_partial_sum(h, n, coeff::multiscale_point(h, x, n)); };
    if (!opt.cache_dir.empty()) {
      std::ostringstream name;
      name << opt.cache_dir << "/tables-" << std::hex
           << std::hash<std::string>{}(h.fingerprint(n) + "|" + std::to_string(ev.options().slow_n) + "|" +
                                       std::to_string(ev.options().cell_n))
           << ".txt";
      if (!ev.load(name.str())) ev.save(name.str());
    }
    p0.a = [&ev](const Vec& x) { return ev.interpolate(0, {x}); };
    const auto ue = bvp::solve_2d(pe, grid);
    const auto u0 = bvp::solve_2d(p0, grid);
    pt.error = bvp::difference_norm(ue, u0, bvp::Norm::L2);
  }
  return pt;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("line fit needs two or more points");
  const double m = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / m, my = sy / m;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw InputError("line fit needs distinct abscissae");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy == 0.0 ? 1.0 : sxy * sxy / (sxx * syy);
  return f;
}

RateReport sweep(const Family& family, std::vector<double> parameters, const Data& data, const SweepOptions& opt,
                 const std::string& parameter_name) {
  std::sort(parameters.begin(), parameters.end());
  RateReport r;
  r.parameter_name = parameter_name;
  r.points.resize(parameters.size());
  parallel_for(parameters.size(), opt.threads, [&](std::size_t i) {
    const auto h = family(parameters[i]);
    r.points[i] = evaluate_point(h, data, opt);
    r.points[i].parameter = parameters[i];
  });

  std::vector<double> lx, ly;
  double largest = 0.0;
  for (const auto& p : r.points) {
    if (p.skipped) {
      r.warnings.push_back(parameter_name + " = " + std::to_string(p.parameter) + " skipped: " + p.note);
      continue;
    }
    largest = std::max(largest, p.error);
    if (p.error > 0.0) {
      lx.push_back(std::log(p.parameter));
      ly.push_back(std::log(p.error));
    }
  }
  if (lx.size() >= 3 && largest > kZeroError) {
    const auto fit = fit_line(lx, ly);
    r.slope_defined = true;
    r.slope = fit.slope;
    r.intercept = fit.intercept;
    r.r2 = fit.r2;
  } else {
    r.warnings.push_back("slope undefined: fewer than three nonzero errors above the quadrature floor");
  }
  predictor_compare(r);
  return r;
}

RateReport rate_sweep(const Family& family, std::vector<double> eps1, const Data& data, const SweepOptions& opt) {
  if (eps1.size() < 3) throw ConfigError("rate_sweep needs at least three eps_1 values");
  for (double e : eps1) {
    if (!(e > 0.0 && e <= 0.5)) throw ConfigError("eps_1 values must lie in (0, 1/2]");
  }
  return sweep(family, std::move(eps1), data, opt, "eps1");
}

RateReport weierstrass_tau_sweep(const Family& family, std::vector<double> taus, const Data& data,
                                 const SweepOptions& opt) {
  if (taus.size() < 3) throw ConfigError("tau sweep needs at least three values");
  for (double t : taus) {
    if (!(t > 0.0 && t <= 0.5)) throw ConfigError("tau values must lie in (0, 1/2]");
  }
  return sweep(family, std::move(taus), data, opt, "tau");
}

void predictor_compare(RateReport& report, double spread) {
  report.c_min = INFINITY;
  report.c_max = 0.0;
  bool any = false;
  for (auto& p : report.points) {
    if (p.skipped) continue;
    p.empirical_c = p.predictor > 0.0 ? p.error / p.predictor : 0.0;
    if (p.error <= kZeroError) continue;
    any = true;
    report.c_min = std::min(report.c_min, p.empirical_c);
    report.c_max = std::max(report.c_max, p.empirical_c);
  }
  if (!any) {
    report.c_min = report.c_max = 0.0;
    report.predictor_pass = true;
    return;
  }
  report.predictor_pass = std::isfinite(report.c_max) && report.c_min > 0.0 && report.c_max <= spread * report.c_min;
}

void write_csv(std::ostream& os, const RateReport& report) {
  os << std::setprecision(17) << "parameter,error,predictor,empirical_C\n";
  for (const auto& p : report.points) {
    if (p.skipped) continue;
    os << p.parameter << "," << p.error << "," << p.predictor << "," << p.empirical_c << "\n";
  }
}

}  // namespace homoglab::rates
