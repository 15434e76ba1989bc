#include "homoglab/regularity.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace homoglab;
using namespace homoglab::coeff;
using namespace homoglab::reg;
using homoglab::scales::ScaleSchedule;

namespace {

bvp::FieldSolution sample_1d(int n, const std::function<double(double)>& u) {
  std::vector<double> v(n + 1);
  for (int i = 0; i <= n; ++i) v[i] = u(static_cast<double>(i) / n);
  return bvp::from_nodes(1, n, std::move(v));
}

bvp::FieldSolution sample_2d(int n, const std::function<double(double, double)>& u) {
  std::vector<double> v((n + 1) * (n + 1));
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) v[i + (n + 1) * j] = u(static_cast<double>(i) / n, static_cast<double>(j) / n);
  }
  return bvp::from_nodes(2, n, std::move(v));
}

Layer slow_base() {
  return Layer::trig(0, 1, {const_term(2.0, 1), TrigTerm{0.5 * identity(1), {Factor{0, make_vec(1.0), -kPi / 2}}}});
}

Hierarchy weierstrass(double tau, double ratio) {
  return weierstrass_builder(WeierstrassSpec{slow_base(), {}, tau, ratio, -1});
}

}  // namespace

TEST(AffineFit, ExactAffine) {
  const auto u = sample_1d(1024, [](double x) { return 3.0 + 2.0 * x; });
  for (double r : {0.01, 0.1, 0.25}) {
    const auto f = fit_affine(u, make_vec(0.5), r);
    EXPECT_NEAR(f.H, 0.0, 1e-12);
    EXPECT_NEAR(f.h, 2.0, 1e-11);
    EXPECT_NEAR(f.constant, 4.0, 1e-12);
  }
  const auto v = sample_2d(128, [](double x, double y) { return 1.0 + x - 2.0 * y; });
  const auto g = fit_affine(v, make_vec(0.5, 0.5), 0.25);
  EXPECT_NEAR(g.H, 0.0, 1e-12);
  EXPECT_NEAR(g.h, std::sqrt(5.0), 1e-11);
}

TEST(AffineFit, QuadraticClosedForm) {
  // x^2 on [c - r, c + r]: residual of s^2 against {1, s} is s^2 - r^2/3,
  // whose mean square is 4 r^4 / 45.
  const double r = 0.25, c = 0.5;
  const auto u = sample_1d(1 << 14, [](double x) { return x * x; });
  const auto f = fit_affine(u, make_vec(c), r);
  EXPECT_NEAR(f.H, 2.0 * r / (3.0 * std::sqrt(5.0)), 1e-7);
  EXPECT_NEAR(f.h, 2.0 * c, 1e-7);
  EXPECT_NEAR(f.constant, c * c + r * r / 3.0, 1e-7);
}

TEST(AffineFit, SourceTermOnly) {
  const auto u = sample_1d(512, [](double) { return 0.0; });
  const auto one = [](const Vec&) { return 1.0; };
  for (double r : {0.05, 0.2}) EXPECT_NEAR(fit_affine(u, make_vec(0.5), r, one).H, r, 1e-14);
  const auto v = sample_2d(64, [](double, double) { return 0.0; });
  EXPECT_NEAR(fit_affine(v, make_vec(0.5, 0.5), 0.25, one).H, 0.25, 1e-14);
}

TEST(AffineFit, Errors) {
  const auto u = sample_1d(64, [](double x) { return x; });
  EXPECT_THROW(fit_affine(u, make_vec(0.1), 0.25), DomainError);
  EXPECT_THROW(fit_affine(u, make_vec(0.5), 0.01), InputError);
  EXPECT_THROW(fit_affine(u, make_vec(0.5), -0.1), InputError);
}

TEST(AffineFit, PropertyOptimalAgainstProbes) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double a = U(rng), b = U(rng), k = 1.0 + 3.0 * std::abs(U(rng));
    const auto u = sample_2d(96, [=](double x, double y) { return std::sin(k * x + a) * std::cos(2.0 * y + b); });
    const Vec c = make_vec(0.5 + 0.1 * U(rng), 0.5 + 0.1 * U(rng));
    const double r = 0.2 + 0.1 * std::abs(U(rng));
    const auto fit = fit_affine(u, c, r);
    const double best = affine_residual(u, c, r, fit.constant, fit.gradient);
    EXPECT_NEAR(best, fit.residual, 1e-14);
    for (int p = 0; p < 12; ++p) {
      const double th = 2.0 * kPi * p / 12.0;
      const double step = 1e-3;
      const Vec dg = make_vec(std::cos(th), std::sin(th)) * step / r;
      const double dc = (p % 3 - 1) * step;
      EXPECT_GT(affine_residual(u, c, r, fit.constant + dc, fit.gradient + dg), best);
    }
  }
}

TEST(AffineFit, PropertyScalingAndAffineShift) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.2, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double s = U(rng), a = U(rng), b = U(rng);
    auto base = [](double x) { return std::exp(x) * std::sin(5.0 * x); };
    const auto u = sample_1d(2048, base);
    const auto us = sample_1d(2048, [&](double x) { return s * base(x); });
    const auto ua = sample_1d(2048, [&](double x) { return base(x) + a + b * x; });
    const double r = 0.05 + 0.1 * (U(rng) / 3.0);
    const auto f = fit_affine(u, make_vec(0.5), r);
    const auto fs = fit_affine(us, make_vec(0.5), r);
    const auto fa = fit_affine(ua, make_vec(0.5), r);
    EXPECT_NEAR(fs.H, s * f.H, 1e-10 * (1.0 + f.H));
    EXPECT_NEAR(fs.h, s * f.h, 1e-10 * (1.0 + f.h));
    EXPECT_NEAR(fs.constant / s, f.constant, 1e-10);
    EXPECT_NEAR(fa.H, f.H, 1e-9);
    EXPECT_NEAR(fa.gradient(0), f.gradient(0) + b, 1e-9);
    EXPECT_NEAR(fa.constant, f.constant + a + 0.5 * b, 1e-9);
    EXPECT_GE(f.H, 0.0);
  }
}

TEST(ProbeRadii, DyadicAndScaleAligned) {
  const auto s = ScaleSchedule::geometric(1.0 / 3.0);
  const auto r = probe_radii(0.25, 1.0 / 64, &s);
  // 1/64 .. 1/4 dyadic plus 1/9, 1/27
  ASSERT_EQ(r.size(), 7u);
  EXPECT_DOUBLE_EQ(r.front(), 1.0 / 64);
  EXPECT_DOUBLE_EQ(r.back(), 0.25);
  EXPECT_NEAR(r[2], 1.0 / 27, 1e-15);
  EXPECT_THROW(probe_radii(0.1, 0.2), InputError);
}

TEST(Doubling, AffineGivesZero) {
  const auto u = sample_1d(4096, [](double x) { return 1.0 - x; });
  const auto prof = profile(u, make_vec(0.5), probe_radii(0.25, 1.0 / 512));
  const auto rep = doubling_check(prof);
  EXPECT_EQ(rep.c_h, 0.0);
  EXPECT_GT(rep.pairs, 0);
}

TEST(Doubling, HarmonicStableUnderRefinement) {
  auto harm = [](double x, double y) { return x * x - y * y + 0.5 * x * y; };
  const auto radii = probe_radii(0.25, 1.0 / 32);
  std::vector<double> more = radii;
  for (double r : radii) more.push_back(0.75 * r);
  const auto a = doubling_check(profile(sample_2d(256, harm), make_vec(0.5, 0.5), more));
  const auto b = doubling_check(profile(sample_2d(512, harm), make_vec(0.5, 0.5), more));
  EXPECT_TRUE(std::isfinite(a.c_H));
  EXPECT_TRUE(std::isfinite(a.c_h));
  EXPECT_NEAR(a.c_H, b.c_H, 0.05 * b.c_H);
  // the fit gradient of a harmonic quadratic is its gradient at the center
  EXPECT_NEAR(a.c_h, b.c_h, 0.05 * b.c_h + 1e-10);
}

TEST(Doubling, NeedsEightRadii) {
  const auto u = sample_1d(256, [](double x) { return x; });
  const auto prof = profile(u, make_vec(0.5), {0.25});
  EXPECT_THROW(doubling_check(prof), InputError);
}

TEST(Mm, SingleLayer) {
  const auto s = ScaleSchedule::geometric(0.5);
  const auto m = mm_series(s, DeltaSequence::finite({0.3}), 1.0, 10.0, 30);
  for (int k = 0; k <= 30; ++k) {
    EXPECT_NEAR(m.M[k], 0.3 * s.epsilon(k), 1e-16);
    EXPECT_EQ(m.second[k], 0.0);
  }
  const auto c = mm_series(s, DeltaSequence::finite({0.3}), 1.0, 10.0, 30, true);
  for (int k = 0; k <= 30; ++k) EXPECT_NEAR(c.M[k], m.M[k], 1e-16);
}

TEST(Mm, ZeroDelta) {
  const auto m = mm_series(ScaleSchedule::geometric(0.5), DeltaSequence::finite({0.0}), 1.0, 1e6, 20);
  for (double v : m.M) EXPECT_EQ(v, 0.0);
  ASSERT_TRUE(m.m0.has_value());
  EXPECT_EQ(*m.m0, 0);
}

TEST(Mm, GeometricDirectVsClosed) {
  const auto s = ScaleSchedule::geometric(0.5);
  const auto d = DeltaSequence::geometric({}, 1.0, 0.25);
  const auto a = mm_series(s, d, 1.0, 64.0);
  const auto b = mm_series(s, d, 1.0, 64.0, scales::kDefaultHorizon, true);
  for (int m = 0; m <= scales::kDefaultHorizon; ++m) {
    EXPECT_NEAR(a.M[m], b.M[m], 1e-10);
    EXPECT_NEAR(a.tails[m], b.tails[m], 1e-10);
  }
  // sum_{j<=3} 2^{j-3} (4/3) 4^{-j}
  double first3 = 0.0;
  for (int j = 0; j <= 3; ++j) first3 += std::pow(2.0, j - 3) * (4.0 / 3.0) * std::pow(0.25, j);
  EXPECT_NEAR(b.first[3], first3, 1e-15);
  for (int m = 1; m <= scales::kDefaultHorizon; ++m) EXPECT_LE(a.tails[m], a.tails[m - 1]);
  EXPECT_LT(a.tails[20], 1e-3);
  EXPECT_TRUE(a.m0.has_value());
  EXPECT_TRUE(a.hypothesis_holds);
  EXPECT_FALSE(a.divergent);
}

TEST(Mm, DivergentFlagged) {
  const auto m = mm_series(ScaleSchedule::geometric(0.5), DeltaSequence::power({1.0}, 1.0, 2.5), 1.0, 4.0, 20);
  EXPECT_TRUE(m.divergent);
  EXPECT_FALSE(m.m0.has_value());
  EXPECT_THROW(mm_series(ScaleSchedule::geometric(0.5), DeltaSequence::power({1.0}, 1.0, 4.0), 1.0, 4.0, 20, true),
               InputError);
}

TEST(Mm, PropertyTailsVanish) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.05, 0.45);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = ScaleSchedule::geometric(U(rng));
    const auto d = DeltaSequence::geometric({U(rng), U(rng)}, U(rng), U(rng));
    const auto m = mm_series(s, d, 1.0, 8.0);
    for (std::size_t k = 1; k < m.tails.size(); ++k) EXPECT_LE(m.tails[k], m.tails[k - 1]);
    for (double v : m.M) EXPECT_GE(v, 0.0);
    EXPECT_LT(m.tails.back(), 1e-12);
    EXPECT_TRUE(m.m0.has_value());
  }
}

TEST(Dini, ConstantCoefficient) {
  Hierarchy h(1, ScaleSchedule::geometric(0.5), {Layer::trig(0, 1, {const_term(2.0, 1)})});
  const auto rep = dini_modulus(h, 0.5);
  for (double w : rep.omega) EXPECT_EQ(w, 0.0);
  EXPECT_EQ(rep.integral, 0.0);
}

TEST(Dini, LipschitzLayer) {
  Hierarchy h(1, ScaleSchedule::geometric(0.5), {slow_base()});
  const double L = kPi;  // 0.5 * 2 pi
  const auto rep = dini_modulus(h, 0.5);
  for (std::size_t i = 0; i < rep.r.size(); ++i) EXPECT_LE(rep.omega[i], L * rep.r[i] * (1.0 + 1e-12));
  EXPECT_LE(rep.integral, L / 2.0);
}

TEST(Dini, WeierstrassBelowOverlay) {
  const auto rep = dini_modulus(weierstrass(0.25, 0.5), 0.5);
  EXPECT_TRUE(rep.vartheta_holds);
  EXPECT_TRUE(rep.below_overlay);
  EXPECT_GT(rep.C, 0.0);
  EXPECT_LT(rep.integral, 3.0 * rep.C);
  EXPECT_LT(rep.overlay_integral, 3.0 * rep.C);
  EXPECT_THROW(dini_modulus(weierstrass(0.25, 0.5), 0.5, 1.0, 12, 1024), InputError);
}

TEST(Lipschitz, AffineSolution) {
  rates::Data data;
  data.f = [](const Vec&) { return 0.0; };
  data.g = [](const Vec& x) { return 1.0 + 2.0 * x(0); };
  auto family = [](double e) {
    return Hierarchy(1, ScaleSchedule::geometric(e), {Layer::trig(0, 1, {const_term(2.0, 1)})});
  };
  LipschitzOptions opt;
  opt.solve.panels = 4096;
  const auto rep = lipschitz_probe(family, {0.125, 0.25, 0.0625}, data, opt);
  for (const auto& e : rep.entries) EXPECT_NEAR(e.sup_ratio, 1.0, 1e-9);
  EXPECT_TRUE(rep.bounded);
  EXPECT_EQ(rep.entries.front().parameter, 0.0625);
}

TEST(Lipschitz, WeierstrassFamilyBounded) {
  LipschitzOptions opt;
  opt.solve.panels = 16384;
  const auto rep = lipschitz_probe([](double e) { return weierstrass(0.25, e); }, {0.125, 0.0625, 1.0 / 32},
                                   rates::Data{}, opt);
  EXPECT_TRUE(rep.bounded) << rep.variation;
  for (const auto& e : rep.entries) EXPECT_GE(e.profile.fits.size(), 8u);
}

TEST(Profile, Csv) {
  const auto u = sample_1d(256, [](double x) { return 2.0 * x; });
  const auto prof = profile(u, make_vec(0.5), {0.25});
  std::ostringstream os;
  write_profile_csv(os, prof);
  EXPECT_EQ(os.str().substr(0, 15), "r,H,h,grad_1\n0.");
}
