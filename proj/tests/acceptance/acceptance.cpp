// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include "homoglab/bvp.hpp"
#include "homoglab/cell.hpp"
#include "homoglab/coefficients.hpp"
#include "homoglab/rates.hpp"
#include "homoglab/regularity.hpp"
#include "homoglab/reiterate.hpp"
#include "homoglab/scales.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

using namespace homoglab;
using coeff::Hierarchy;
using coeff::Layer;
using scales::ScaleSchedule;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < limit_s;
  const bool ok = o.pass && in_time;
  if (!ok) ++failures;
  std::printf("%s %2d %-34s %s [%.2fs < %gs%s]\n", ok ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs, limit_s,
              in_time ? "" : " exceeded");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double two_plus_sin(double y) { return 2.0 + std::sin(kTwoPi * y); }

Layer slow_base() {
  return Layer::trig(0, 1, {coeff::const_term(2.0, 1),
                            coeff::TrigTerm{0.5 * identity(1), {coeff::Factor{0, make_vec(1.0), -kPi / 2}}}});
}

Hierarchy weierstrass(double tau, double ratio, int levels = -1) {
  return coeff::weierstrass_builder(coeff::WeierstrassSpec{slow_base(), {}, tau, ratio, levels});
}

// sum_{j<=m} eps_m/eps_j <= K: every ratio below 1 - 1/K.
ScaleSchedule random_admissible(std::mt19937_64& rng, double K) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  const double qmax = 1.0 - 1.0 / K;
  std::vector<double> prefix;
  double e = 1.0;
  const int p = 1 + static_cast<int>(rng() % 12);
  for (int j = 0; j < p; ++j) {
    e *= qmax * u(rng);
    prefix.push_back(e);
  }
  return ScaleSchedule::explicit_with_tail(prefix, qmax * u(rng));
}

bvp::Problem scalar_1d(std::function<double(double)> a) {
  bvp::Problem p;
  p.dim = 1;
  p.a = [a](const Vec& x) { return Mat::Constant(1, 1, a(x(0))); };
  p.f = [](const Vec& x) { return 1.0 + x(0); };
  p.g = [](const Vec&) { return 0.0; };
  return p;
}

}  // namespace

int main() {
  criterion(1, "1D harmonic mean oracle", 1.0, [] {
    auto a = cell::MatrixField::sample(1, 64, [](const Vec& y) { return Mat::Constant(1, 1, 1.0 / two_plus_sin(y(0))); });
    const double v = cell::homogenize(a, 1.0 / 3.0)(0, 0);
    const double err = std::abs(v - 0.5);
    return Outcome{err <= 1e-10, fmt("a_hat %.15g, |err| %.2e <= 1e-10", v, err)};
  });

  criterion(2, "2D laminate oracle", 10.0, [] {
    auto a = cell::MatrixField::sample(2, 64, [](const Vec& y) { return Mat(two_plus_sin(y(0)) * identity(2)); });
    const Mat ah = cell::homogenize(a, 1.0);
    Mat exact = Mat::Zero(2, 2);
    exact(0, 0) = std::sqrt(3.0);
    exact(1, 1) = 2.0;
    const double err = (ah - exact).cwiseAbs().maxCoeff();
    return Outcome{err <= 1e-6, fmt("max entry error %.2e <= 1e-6", err)};
  });

  criterion(3, "Weierstrass rate in eps_1", 120.0, [] {
    rates::SweepOptions opt;
    const auto rep = rates::rate_sweep([](double e) { return weierstrass(0.25, e); },
                                       {0.25, 0.125, 0.0625, 0.03125, 0.015625}, rates::Data{}, opt);
    const bool ok = rep.slope_defined && rep.slope >= 0.9 && rep.r2 >= 0.98;
    return Outcome{ok, fmt("slope %.4f >= 0.9, R2 %.5f >= 0.98", rep.slope, rep.r2)};
  });

  criterion(4, "Weierstrass rate in tau", 60.0, [] {
    rates::SweepOptions opt;
    const auto rep = rates::weierstrass_tau_sweep([](double t) { return weierstrass(t, 0.0625); },
                                                  {0.0625, 0.125, 0.25}, rates::Data{}, opt);
    const bool ok = rep.slope_defined && rep.slope >= 0.8 && rep.slope <= 1.2;
    return Outcome{ok, fmt("slope %.4f in [0.8, 1.2]", rep.slope)};
  });

  criterion(5, "delta recursion below closed bound", 5.0, [] {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int runs = 0, bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<double> prefix(rng() % 7);
      for (auto& v : prefix) v = 0.5 * u(rng);
      const auto delta = coeff::DeltaSequence::geometric(prefix, u(rng), 0.75 * u(rng));
      const int n = static_cast<int>(rng() % 40);
      for (double c0 : {0.0, 1.0, 10.0}) {
        const auto st = reit::delta_recursion(delta, n, c0);
        ++runs;
        if (!st.pass) ++bad;
      }
    }
    return Outcome{bad == 0, fmt("%.0f of %.0f runs exceed the bound by more than 4 ulp", bad, runs)};
  });

  criterion(6, "stability under perturbation", 5.0, [] {
    const auto h1 = weierstrass(0.25, 0.5, 3);
    bool ok = true;
    double worst = 0.0, ratio = 0.0;
    for (double tau : {0.01, 0.05, 0.1}) {
      auto base = Layer::trig(0, 1, {coeff::const_term(2.0 + tau, 1),
                                     coeff::TrigTerm{0.5 * identity(1), {coeff::Factor{0, make_vec(1.0), -kPi / 2}}}});
      const auto h2 = coeff::weierstrass_builder(coeff::WeierstrassSpec{base, {}, 0.25, 0.5, 3});
      const auto rep = reit::stability_probe(h1, h2, tau, 100);
      ok = ok && rep.tau_valid && rep.measured <= rep.bound;
      worst = std::max(worst, rep.measured / rep.bound);
      ratio = std::max(ratio, rep.ratio);
    }
    return Outcome{ok, fmt("max measured / (mu^-4 tau) %.4f <= 1, max measured / tau %.4f", worst, ratio)};
  });

  criterion(7, "truncation Cauchy property", 30.0, [] {
    const auto h = weierstrass(0.25, 0.5, 3);
    const double c = reit::stability_constant(h.mu());
    std::vector<reit::IntermediateEvaluator> evs;
    for (int n = 0; n <= 3; ++n) evs.emplace_back(h, n);
    double worst = 0.0;
    for (int s = 0; s < 100; ++s) {
      const Vec x = make_vec((s + 0.5) / 100.0);
      std::vector<Mat> a;
      for (const auto& ev : evs) a.push_back(ev.eval(0, {x}));
      for (int n = 0; n < 3; ++n) {
        for (int m = n + 1; m <= 3; ++m) {
          worst = std::max(worst, op_norm(a[n] - a[m]) / (c * h.delta().range_sum(n + 1, m)));
        }
      }
    }
    return Outcome{worst <= 1.0, fmt("max |A_n - A_m| / (mu^-4 sum delta) %.3e <= 1", worst)};
  });

  criterion(8, "schedule decay bound", 1.0, [] {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> uk(1.0 + 1e-6, 2.0);
    int bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const double K = uk(rng);
      const auto r = scales::decay_bound_check(random_admissible(rng, K), K, 64);
      if (!r.hypothesis_holds || !r.all_pass) ++bad;
    }
    return Outcome{bad == 0, fmt("%.0f of 1000 schedules violate the bound", bad)};
  });

  criterion(9, "M_m summability", 1.0, [] {
    const auto s = ScaleSchedule::geometric(0.5);
    const auto delta = coeff::DeltaSequence::geometric({}, 1.0, 0.25);
    const auto direct = reg::mm_series(s, delta, 1.0, 64.0, 64);
    const auto closed = reg::mm_series(s, delta, 1.0, 64.0, 64, true);
    bool monotone = true;
    double diff = 0.0;
    for (std::size_t m = 0; m < direct.tails.size(); ++m) {
      if (m > 0 && direct.tails[m] > direct.tails[m - 1]) monotone = false;
      diff = std::max({diff, std::abs(direct.M[m] - closed.M[m]), std::abs(direct.tails[m] - closed.tails[m])});
    }
    const bool ok = monotone && direct.tails[20] < 1e-3 && direct.m0.has_value() && diff <= 1e-10;
    return Outcome{ok, fmt("tail_20 %.2e < 1e-3, m0 %.0f, closed vs direct %.1e", direct.tails[20],
                           direct.m0 ? *direct.m0 : -1.0, diff) +
                           (monotone ? ", monotone" : ", NOT monotone")};
  });

  criterion(10, "uniform Lipschitz probe", 180.0, [] {
    reg::LipschitzOptions opt;
    opt.solve.panels = 16384;
    const auto rep = reg::lipschitz_probe([](double e) { return weierstrass(0.25, e); },
                                          {0.125, 0.0625, 0.03125, 0.015625}, rates::Data{}, opt);
    return Outcome{rep.bounded && rep.variation <= 2.0, fmt("variation %.4f <= 2", rep.variation)};
  });

  criterion(11, "Dini criterion", 30.0, [] {
    const auto rep = reg::dini_modulus(weierstrass(0.25, 0.5), 0.5);
    const bool ok = rep.below_overlay && rep.integral < 3.0 * rep.C;
    return Outcome{ok, fmt("C %.4f, integral %.4f < 3C", rep.C, rep.integral) +
                           (rep.below_overlay ? ", below overlay" : ", ABOVE overlay")};
  });

  criterion(12, "two-scale defect halving", 30.0, [] {
    auto a = cell::MatrixField::sample(1, 64, [](const Vec& y) { return Mat::Constant(1, 1, two_plus_sin(y(0))); });
    const auto chi = cell::solve_corrector(a, 1.0);
    const auto u0 = bvp::solve_1d_exact(scalar_1d([](double) { return std::sqrt(3.0); }));
    std::vector<double> w;
    for (double eps : {1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128}) {
      const auto ue = bvp::solve_1d_exact(scalar_1d([eps](double x) { return two_plus_sin(x / eps); }), 16384);
      w.push_back(bvp::two_scale_defect(ue, u0, chi, eps).w_l2);
    }
    double lo = INFINITY, hi = 0.0;
    for (std::size_t i = 1; i < w.size(); ++i) {
      lo = std::min(lo, w[i - 1] / w[i]);
      hi = std::max(hi, w[i - 1] / w[i]);
    }
    return Outcome{lo >= 1.6 && hi <= 2.4, fmt("halving ratios in [%.4f, %.4f] within [1.6, 2.4]", lo, hi)};
  });

  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
