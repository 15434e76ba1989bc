#include "homoglab/regularity.hpp"

#include "homoglab/parallel.hpp"
#include "homoglab/reiterate.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <limits>
#include <ostream>

namespace homoglab::reg {

namespace {

struct Node {
  Vec x;
  double u;
  double w;
};

void check_ball(int dim, int n, const Vec& center, double r, int min_nodes) {
  if (center.size() != dim) throw InputError("ball center has the wrong dimension");
  if (!(r > 0.0)) throw InputError("ball radius must be positive");
  for (int i = 0; i < dim; ++i) {
    if (center(i) - r < -1e-12 || center(i) + r > 1.0 + 1e-12) throw DomainError("ball leaves the unit cube");
  }
  if (r * n < min_nodes) throw InputError("grid does not resolve the ball radius");
}

std::vector<Node> ball_nodes(const bvp::FieldSolution& u, const Vec& center, double r) {
  const int n = u.cells();
  const double hx = 1.0 / n;
  const double slack = 1e-12;
  const auto& vals = u.nodes();
  std::vector<Node> out;
  if (u.dim() == 1) {
    const int lo = std::max(0, static_cast<int>(std::ceil((center(0) - r) * n - slack)));
    const int hi = std::min(n, static_cast<int>(std::floor((center(0) + r) * n + slack)));
    for (int i = lo; i <= hi; ++i) {
      const double w = (i == lo || i == hi) ? 0.5 * hx : hx;
      out.push_back({make_vec(i * hx), vals[i], w});
    }
    return out;
  }
  const int lo0 = std::max(0, static_cast<int>(std::ceil((center(0) - r) * n - slack)));
  const int hi0 = std::min(n, static_cast<int>(std::floor((center(0) + r) * n + slack)));
  const int lo1 = std::max(0, static_cast<int>(std::ceil((center(1) - r) * n - slack)));
  const int hi1 = std::min(n, static_cast<int>(std::floor((center(1) + r) * n + slack)));
  for (int j = lo1; j <= hi1; ++j) {
    for (int i = lo0; i <= hi0; ++i) {
      const Vec x = make_vec(i * hx, j * hx);
      if ((x - center).norm() <= r * (1.0 + slack)) out.push_back({x, vals[i + (n + 1) * j], hx * hx});
    }
  }
  return out;
}

double weighted_residual(const std::vector<Node>& nodes, const Vec& center, double constant, const Vec& gradient) {
  double s = 0.0, wt = 0.0;
  for (const auto& nd : nodes) {
    const double e = nd.u - constant - gradient.dot(nd.x - center);
    s += nd.w * e * e;
    wt += nd.w;
  }
  return std::sqrt(s / wt);
}

}  // namespace

AffineFit fit_affine(const bvp::FieldSolution& u, const Vec& center, double r, const bvp::ScalarFn& f, double p,
                     int min_nodes) {
  const int d = u.dim();
  check_ball(d, u.cells(), center, r, min_nodes);
  if (p <= 0.0) p = 2.0 * d;
  const auto nodes = ball_nodes(u, center, r);

  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(d + 1, d + 1);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(d + 1);
  Eigen::VectorXd phi(d + 1);
  for (const auto& nd : nodes) {
    phi(0) = 1.0;
    // basis in units of r keeps the normal equations well scaled
    for (int i = 0; i < d; ++i) phi(i + 1) = (nd.x(i) - center(i)) / r;
    G += nd.w * phi * phi.transpose();
    b += nd.w * nd.u * phi;
  }
  const Eigen::VectorXd c = G.ldlt().solve(b);

  AffineFit fit;
  fit.r = r;
  fit.nodes = static_cast<int>(nodes.size());
  fit.constant = c(0);
  fit.gradient = Vec(d);
  for (int i = 0; i < d; ++i) fit.gradient(i) = c(i + 1) / r;
  fit.residual = weighted_residual(nodes, center, fit.constant, fit.gradient);
  if (f) {
    double s = 0.0, wt = 0.0;
    for (const auto& nd : nodes) {
      s += nd.w * std::pow(std::abs(f(nd.x)), p);
      wt += nd.w;
    }
    fit.source = r * std::pow(s / wt, 1.0 / p);
  }
  fit.H = fit.residual / r + fit.source;
  fit.h = fit.gradient.norm();
  return fit;
}

double affine_residual(const bvp::FieldSolution& u, const Vec& center, double r, double constant,
                       const Vec& gradient) {
  check_ball(u.dim(), u.cells(), center, r, 1);
  return weighted_residual(ball_nodes(u, center, r), center, constant, gradient);
}

RegularityProfile profile(const bvp::FieldSolution& u, const Vec& center, std::vector<double> radii,
                          const bvp::ScalarFn& f, double p) {
  std::sort(radii.begin(), radii.end());
  RegularityProfile prof;
  prof.center = center;
  prof.p = p > 0.0 ? p : 2.0 * u.dim();
  for (double r : radii) prof.fits.push_back(fit_affine(u, center, r, f, prof.p));
  return prof;
}

std::vector<double> probe_radii(double r0, double floor, const scales::ScaleSchedule* schedule) {
  if (!(r0 > 0.0) || !(floor > 0.0) || floor > r0) throw InputError("probe radii need 0 < floor <= r0");
  std::vector<double> radii;
  for (double r = r0; r >= floor * (1.0 - 1e-12); r *= 0.5) radii.push_back(r);
  if (schedule) {
    for (int m = 1; m <= schedule->horizon(); ++m) {
      const double e = schedule->epsilon(m);
      if (e < floor) break;
      if (e <= r0) radii.push_back(e);
    }
  }
  std::sort(radii.begin(), radii.end());
  radii.erase(std::unique(radii.begin(), radii.end(),
                          [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(a, b); }),
              radii.end());
  return radii;
}

DoublingReport doubling_check(const RegularityProfile& prof) {
  const auto& fits = prof.fits;
  if (fits.size() < 8) throw InputError("doubling check needs at least 8 radii");
  auto ratio = [](double num, double den) {
    if (num == 0.0) return 0.0;
    return den == 0.0 ? std::numeric_limits<double>::infinity() : num / den;
  };
  DoublingReport rep;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    for (std::size_t j = i + 1; j < fits.size(); ++j) {
      if (std::abs(fits[j].r - 2.0 * fits[i].r) > 1e-9 * fits[j].r) continue;
      double hmax = 0.0, lo = INFINITY, hi = -INFINITY;
      for (std::size_t t = i; t <= j; ++t) {
        hmax = std::max(hmax, fits[t].H);
        lo = std::min(lo, fits[t].h);
        hi = std::max(hi, fits[t].h);
      }
      rep.c_H = std::max(rep.c_H, ratio(hmax, fits[j].H));
      rep.c_h = std::max(rep.c_h, ratio(hi - lo, fits[j].H));
      ++rep.pairs;
    }
  }
  return rep;
}

LipschitzReport lipschitz_probe(const rates::Family& family, std::vector<double> params, const rates::Data& data,
                                const LipschitzOptions& opt) {
  std::sort(params.begin(), params.end());
  LipschitzReport rep;
  rep.entries.resize(params.size());
  const auto& so = opt.solve;
  parallel_for(params.size(), so.threads, [&](std::size_t i) {
    auto& e = rep.entries[i];
    e.parameter = params[i];
    const auto h = family(params[i]);
    if (h.dim() != 1) throw InputError("lipschitz_probe is one-dimensional");
    const int budget = so.evaluator.budget < 0 ? reit::default_budget(1) : so.evaluator.budget;
    const int n = std::min({so.truncate, h.depth(), budget});
    reit::IntermediateEvaluator ev(h, n, so.evaluator);
    const auto sol = rates::solve_oscillating_1d(ev, data, so);
    e.note = sol.note;
    e.floor = static_cast<double>(opt.floor_nodes) / so.panels;
    if (sol.skipped) {
      e.sup_ratio = NAN;
      return;
    }
    const auto& sched = h.schedule();
    e.profile = profile(sol.u, make_vec(opt.center), probe_radii(opt.r0, e.floor, &sched), data.f);
    const auto& top = e.profile.fits.back();
    const double base = top.H + top.h;
    for (const auto& f : e.profile.fits) e.sup_ratio = std::max(e.sup_ratio, (f.H + f.h) / base);
  });
  double lo = INFINITY, hi = 0.0;
  int used = 0;
  for (const auto& e : rep.entries) {
    if (!std::isfinite(e.sup_ratio)) continue;
    lo = std::min(lo, e.sup_ratio);
    hi = std::max(hi, e.sup_ratio);
    ++used;
  }
  rep.variation = used > 0 ? hi / lo : INFINITY;
  rep.bounded = used >= 2 && rep.variation <= 2.0;
  return rep;
}

namespace {

// sum_{k>=1} k^alpha tau^k
double polylog_weight(double alpha, double tau) {
  double s = 0.0;
  for (int k = 1; k < 100000; ++k) {
    const double t = std::pow(static_cast<double>(k), alpha) * std::pow(tau, k);
    s += t;
    if (t <= 1e-18 * s) break;
  }
  return s;
}

}  // namespace

MmSeries mm_series(const scales::ScaleSchedule& s, const coeff::DeltaSequence& delta, double rho, double T,
                   int horizon, bool closed_form) {
  if (!(rho > 0.0)) throw InputError("rho must be positive");
  if (!(T > 0.0)) throw InputError("T must be positive");
  if (horizon < 1) throw InputError("horizon must be >= 1");
  MmSeries out;
  out.alpha = 0.5 * rho;
  out.T = T;
  out.closed_form = closed_form;
  out.divergent = !delta.converges(1.0 + rho);
  out.hypothesis_holds = true;
  for (int m = 1; m <= horizon; ++m) {
    if (scales::sum_ratio(s, m) > 2.0) out.hypothesis_holds = false;
  }
  const double alpha = out.alpha;
  const int H = horizon;
  out.first.assign(H + 1, 0.0);
  out.second.assign(H + 1, 0.0);
  out.M.assign(H + 1, 0.0);
  out.tails.assign(H + 1, 0.0);

  if (!closed_form) {
    const int cap = H + 4096;
    std::vector<double> dl(cap + 1), R(cap + 2, 0.0);
    for (int l = 0; l <= cap; ++l) dl[l] = delta(l);
    for (int l = cap; l >= 0; --l) R[l] = R[l + 1] + dl[l];
    for (int m = 0; m <= H; ++m) {
      double first = 0.0, ratios = 0.0;
      for (int j = 0; j <= m; ++j) {
        const double q = s.epsilon(m) / s.epsilon(j);
        first += q * R[j];
        ratios += q;
      }
      double w = 0.0;
      for (int k = 1; k + m <= cap; ++k) w += std::pow(static_cast<double>(k), alpha) * dl[k + m];
      out.first[m] = first;
      out.second[m] = ratios * w;
    }
  } else {
    if (s.kind() != scales::ScaleSchedule::Kind::Geometric) throw InputError("closed form needs a geometric schedule");
    if (delta.tail_kind() == coeff::DeltaSequence::Tail::Power) throw InputError("closed form needs geometric delta");
    const double q = s.epsilon(1);
    const int P = delta.prefix_size();
    const bool geo = delta.tail_kind() == coeff::DeltaSequence::Tail::Geometric;
    const double c = geo ? delta.tail_c() : 0.0;
    const double tau = geo ? delta.tail_tau() : 0.0;
    const double S = geo ? polylog_weight(alpha, tau) : 0.0;
    std::vector<double> pre(P + 1, 0.0);
    for (int l = P - 1; l >= 0; --l) pre[l] = pre[l + 1] + delta.prefix()[l];
    const double tail_at_P = geo ? c * std::pow(tau, P) / (1.0 - tau) : 0.0;
    for (int m = 0; m <= H; ++m) {
      double first = 0.0;
      for (int j = 0; j <= std::min(m, P - 1); ++j) first += std::pow(q, m - j) * (pre[j] + tail_at_P);
      if (geo && m >= P) {
        double g;
        if (std::abs(q - tau) <= 1e-15 * q) {
          g = (m - P + 1) * std::pow(q, m);
        } else {
          g = (std::pow(q, m - P + 1) * std::pow(tau, P) - std::pow(tau, m + 1)) / (q - tau);
        }
        first += c / (1.0 - tau) * g;
      }
      const double ratios = (1.0 - std::pow(q, m + 1)) / (1.0 - q);
      double w = 0.0;
      const int k0 = std::max(1, P - m);
      for (int k = 1; k < k0; ++k) w += std::pow(static_cast<double>(k), alpha) * delta.prefix()[k + m];
      if (geo) {
        double partial = 0.0;
        for (int k = 1; k < k0; ++k) partial += std::pow(static_cast<double>(k), alpha) * std::pow(tau, k);
        w += c * std::pow(tau, m) * (S - partial);
      }
      out.first[m] = first;
      out.second[m] = ratios * w;
    }
  }
  for (int m = 0; m <= H; ++m) out.M[m] = std::max(out.first[m], out.second[m]);
  double acc = 0.0;
  for (int m = H; m >= 0; --m) {
    acc += out.M[m];
    out.tails[m] = acc;
  }
  if (!out.divergent) {
    for (int m = 0; m <= H; ++m) {
      if (T * out.tails[m] <= 1.0) {
        out.m0 = m;
        break;
      }
    }
  }
  return out;
}

double dini_overlay(double r, double rho) { return std::sqrt(r) + std::pow(std::abs(std::log(r)), -1.0 - rho); }

namespace {

// max - min over every window of w + 1 consecutive samples
double window_oscillation(const std::vector<double>& a, int w) {
  std::deque<int> mx, mn;
  double best = 0.0;
  for (int i = 0; i < static_cast<int>(a.size()); ++i) {
    while (!mx.empty() && a[mx.back()] <= a[i]) mx.pop_back();
    while (!mn.empty() && a[mn.back()] >= a[i]) mn.pop_back();
    mx.push_back(i);
    mn.push_back(i);
    while (mx.front() < i - w) mx.pop_front();
    while (mn.front() < i - w) mn.pop_front();
    best = std::max(best, a[mx.front()] - a[mn.front()]);
  }
  return best;
}

}  // namespace

DiniReport dini_modulus(const coeff::Hierarchy& h, double vartheta, double rho, int kmin, int samples, int per_octave,
                        double tol) {
  if (h.dim() != 1) throw InputError("dini_modulus is one-dimensional");
  if (samples < (1 << 16)) throw InputError("dini_modulus needs at least 2^16 samples");
  if (kmin < 1 || per_octave < 1) throw InputError("bad radius grid");
  if (!(vartheta > 0.0 && vartheta < 1.0)) throw InputError("vartheta must lie in (0,1)");
  DiniReport rep;
  rep.samples = samples;
  rep.rho = rho;
  rep.vartheta = vartheta;
  rep.levels = std::min(h.depth(), coeff::truncation_level(h, tol));

  const auto& s = h.schedule();
  rep.vartheta_holds = true;
  for (int j = 1; j <= s.horizon(); ++j) {
    if (s.epsilon(j) < std::pow(vartheta, j) * (1.0 - 1e-12)) rep.vartheta_holds = false;
  }

  const double L = h.domain_length();
  const double hx = L / samples;
  std::vector<double> a(samples + 1);
  for (int i = 0; i <= samples; ++i) {
    const Vec x = make_vec(i * hx);
    a[i] = coeff::eval_partial_sum(h, rep.levels, coeff::multiscale_point(h, x, rep.levels))(0, 0);
  }
  auto omega = [&](double r) {
    const int w = std::max(0, static_cast<int>(std::ceil(r / hx - 1e-9)) - 1);
    return window_oscillation(a, w);
  };

  // omega and the overlay both increase, so omega(2^{1-k}) <= C overlay(2^-k)
  // bounds omega by the overlay on all of [2^-k, 2^{1-k}]
  for (int k = 1; k <= kmin; ++k) {
    rep.C = std::max(rep.C, omega(std::ldexp(1.0, 1 - k)) / dini_overlay(std::ldexp(1.0, -k), rho));
  }
  rep.below_overlay = true;
  for (int i = 0; i <= (kmin - 1) * per_octave; ++i) {
    const double r = std::pow(2.0, -1.0 - static_cast<double>(i) / per_octave);
    const double w = omega(r);
    rep.r.push_back(r);
    rep.omega.push_back(w);
    if (w > rep.C * dini_overlay(r, rho) * (1.0 + 1e-12)) rep.below_overlay = false;
  }
  // trapezoid in log r on [r_min, 1/2]; linear extrapolation below r_min
  double integral = rep.omega.back();
  for (std::size_t i = 1; i < rep.r.size(); ++i) {
    integral += 0.5 * (rep.omega[i] + rep.omega[i - 1]) * std::log(rep.r[i - 1] / rep.r[i]);
  }
  rep.integral = integral;
  rep.overlay_integral = rep.C * (std::sqrt(2.0) + std::pow(std::log(2.0), -rho) / rho);
  return rep;
}

void write_profile_csv(std::ostream& os, const RegularityProfile& prof) {
  const int d = static_cast<int>(prof.center.size());
  os << std::setprecision(17) << "r,H,h";
  for (int i = 0; i < d; ++i) os << ",grad_" << i + 1;
  os << "\n";
  for (const auto& f : prof.fits) {
    os << f.r << "," << f.H << "," << f.h;
    for (int i = 0; i < d; ++i) os << "," << f.gradient(i);
    os << "\n";
  }
}

}  // namespace homoglab::reg
