#include "homoglab/rates.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace homoglab;
using namespace homoglab::coeff;
using namespace homoglab::rates;
using homoglab::scales::ScaleSchedule;

namespace {

Hierarchy constant_family(double eps1) {
  return Hierarchy(1, ScaleSchedule::geometric(eps1), {Layer::trig(0, 1, {const_term(2.0, 1)})});
}

// 2 + 0.5 cos(2 pi x / eps1)
Hierarchy two_scale(double eps1) {
  return Hierarchy(1, ScaleSchedule::geometric(eps1),
                   {Layer::trig(0, 1, {const_term(2.0, 1)}), Layer::trig(1, 1, {cos_term(0.5, 1, 1.0)})});
}

Layer slow_base() {
  return Layer::trig(0, 1, {const_term(2.0, 1), TrigTerm{0.5 * identity(1), {Factor{0, make_vec(1.0), -kPi / 2}}}});
}

Hierarchy weierstrass(double tau, double ratio) {
  return weierstrass_builder(WeierstrassSpec{slow_base(), {}, tau, ratio, -1});
}

// -(a(x/eps) u')' = 1, u(0) = u(1) = 0 by a fine midpoint rule, against u_0 = x(1-x)/(2 a_hat).
double two_scale_error_oracle(double eps, int m) {
  auto a = [eps](double x) { return 2.0 + 0.5 * std::cos(2.0 * kPi * x / eps); };
  const double a_hat = std::sqrt(3.75);
  const double hx = 1.0 / m;
  double i0 = 0.0, i1 = 0.0;
  for (int i = 0; i < m; ++i) {
    const double x = (i + 0.5) * hx;
    i0 += hx / a(x);
    i1 += hx * x / a(x);
  }
  const double c = i1 / i0;
  double u = 0.0, err2 = 0.0;
  for (int i = 0; i < m; ++i) {
    const double x = (i + 0.5) * hx;
    const double mid = u + 0.5 * hx * (c - x) / a(x);
    const double diff = mid - x * (1.0 - x) / (2.0 * a_hat);
    err2 += hx * diff * diff;
    u += hx * (c - x) / a(x);
  }
  return std::sqrt(err2);
}

}  // namespace

TEST(FitLine, ExactLine) {
  const auto f = fit_line({0.0, 1.0, 2.0, 3.0}, {1.0, 3.0, 5.0, 7.0});
  EXPECT_NEAR(f.slope, 2.0, 1e-14);
  EXPECT_NEAR(f.intercept, 1.0, 1e-14);
  EXPECT_NEAR(f.r2, 1.0, 1e-14);
  EXPECT_THROW(fit_line({1.0}, {1.0}), InputError);
  EXPECT_THROW(fit_line({1.0, 1.0}, {1.0, 2.0}), InputError);
}

TEST(RateSweep, ConstantFamilyHasNoSlope) {
  const auto r = rate_sweep(constant_family, {0.25, 0.125, 0.0625}, Data{});
  ASSERT_EQ(r.points.size(), 3u);
  for (const auto& p : r.points) {
    EXPECT_LE(p.error, 1e-12);
    EXPECT_GE(p.error, 0.0);
  }
  EXPECT_FALSE(r.slope_defined);
  EXPECT_TRUE(r.predictor_pass);
}

TEST(RateSweep, RejectsBadLists) {
  EXPECT_THROW(rate_sweep(two_scale, {0.25, 0.125}, Data{}), ConfigError);
  EXPECT_THROW(rate_sweep(two_scale, {0.75, 0.25, 0.125}, Data{}), ConfigError);
  EXPECT_THROW(weierstrass_tau_sweep([](double t) { return weierstrass(t, 0.25); }, {0.1, 0.2, 0.6}, Data{}),
               ConfigError);
}

TEST(RateSweep, TwoScaleMatchesOracle) {
  SweepOptions opt;
  const auto p = evaluate_point(two_scale(0.125), Data{}, opt);
  EXPECT_NEAR(p.error, two_scale_error_oracle(0.125, 1 << 21), 1e-8);
  EXPECT_EQ(p.resolved_levels, 1);
}

TEST(RateSweep, TwoScaleFirstOrder) {
  const auto r = rate_sweep(two_scale, {0.25, 0.125, 0.0625, 1.0 / 32, 1.0 / 64}, Data{});
  ASSERT_TRUE(r.slope_defined);
  EXPECT_GE(r.slope, 0.9);
  EXPECT_GE(r.r2, 0.98);
  for (std::size_t i = 1; i < r.points.size(); ++i) EXPECT_LT(r.points[i - 1].parameter, r.points[i].parameter);
}

TEST(RateSweep, WeierstrassFirstOrder) {
  const auto r = rate_sweep([](double e) { return weierstrass(0.25, e); }, {0.25, 0.125, 0.0625, 1.0 / 32}, Data{});
  ASSERT_TRUE(r.slope_defined);
  EXPECT_GE(r.slope, 0.9);
  EXPECT_TRUE(r.predictor_pass) << r.c_min << " " << r.c_max;
}

TEST(TauSweep, LinearInTau) {
  const auto r = weierstrass_tau_sweep([](double t) { return weierstrass(t, 0.25); }, {0.0625, 0.125, 0.25}, Data{});
  ASSERT_TRUE(r.slope_defined);
  EXPECT_GE(r.slope, 0.8);
  EXPECT_LE(r.slope, 1.2);
  const double ratio = r.points[2].error / r.points[1].error;
  EXPECT_GE(ratio, 1.6);
  EXPECT_LE(ratio, 2.4);
}

TEST(Predictor, HalvesWithEps1) {
  SweepOptions opt;
  const auto a = evaluate_point(two_scale(0.25), Data{}, opt);
  const auto b = evaluate_point(two_scale(0.125), Data{}, opt);
  EXPECT_NEAR(b.predictor / a.predictor, 0.5, 1e-15);
  EXPECT_GT(a.predictor, 0.0);
}

TEST(Predictor, ZeroErrorPasses) {
  RateReport r;
  r.points.resize(3);
  for (auto& p : r.points) p.predictor = 1.0;
  predictor_compare(r);
  EXPECT_TRUE(r.predictor_pass);
  EXPECT_EQ(r.points[0].empirical_c, 0.0);
}

TEST(Predictor, SpreadDecides) {
  RateReport r;
  r.points.resize(2);
  r.points[0].error = 1.0;
  r.points[0].predictor = 1.0;
  r.points[1].error = 5.0;
  r.points[1].predictor = 1.0;
  predictor_compare(r);
  EXPECT_FALSE(r.predictor_pass);
  predictor_compare(r, 5.0);
  EXPECT_TRUE(r.predictor_pass);
}

TEST(Resolution, UnresolvedFirstScaleIsSkipped) {
  SweepOptions opt;
  opt.panels = 64;
  const auto p = evaluate_point(two_scale(1.0 / 8), Data{}, opt);
  EXPECT_TRUE(p.skipped);
  EXPECT_FALSE(p.note.empty());
}

TEST(Resolution, FastLayersAreHomogenized) {
  SweepOptions opt;
  opt.panels = 4096;
  const auto p = evaluate_point(weierstrass(0.25, 1.0 / 16), Data{}, opt);
  EXPECT_FALSE(p.skipped);
  EXPECT_EQ(p.levels, 4);
  EXPECT_EQ(p.resolved_levels, 2);
  EXPECT_GT(p.error, 0.0);
}

TEST(Resolution, ErrorStableUnderRefinement) {
  SweepOptions coarse, fine;
  coarse.panels = 8192;
  fine.panels = 65536;
  const auto h = two_scale(1.0 / 16);
  const auto a = evaluate_point(h, Data{}, coarse);
  const auto b = evaluate_point(h, Data{}, fine);
  EXPECT_LE(b.error, a.error * 1.05);
}

TEST(Csv, Format) {
  RateReport r;
  r.points.resize(2);
  r.points[0] = RatePoint{0.25, 0.5, 1.0, 0.5};
  r.points[1] = RatePoint{0.5, 1.0, 2.0, 0.5};
  r.points[1].skipped = true;
  std::ostringstream os;
  write_csv(os, r);
  EXPECT_EQ(os.str(), "parameter,error,predictor,empirical_C\n0.25,0.5,1,0.5\n");
}
