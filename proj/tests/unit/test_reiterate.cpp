#include "homoglab/reiterate.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <random>

using namespace homoglab;
using namespace homoglab::coeff;
using namespace homoglab::reit;
using homoglab::scales::ScaleSchedule;

namespace {

TrigTerm factor_term(double coef, std::vector<Factor> factors, int dim = 1) {
  return TrigTerm{coef * identity(dim), std::move(factors)};
}

Factor f1(int var, double k, double phase = 0.0) { return Factor{var, make_vec(k), phase}; }

Layer base_layer(int dim = 1) {
  // 2 + 0.5 sin(2 pi x)
  Vec k = Vec::Zero(dim);
  k(0) = 1.0;
  return Layer::trig(0, dim, {const_term(2.0, dim), TrigTerm{0.5 * identity(dim), {Factor{0, k, -kPi / 2}}}});
}

Hierarchy weierstrass(double tau, double ratio, int levels = -1) {
  WeierstrassSpec spec{base_layer(), {}, tau, ratio, levels};
  return weierstrass_builder(spec);
}

// Layers that depend on every earlier variable.
Hierarchy coupled(int n) {
  std::vector<Layer> layers{base_layer()};
  for (int l = 1; l <= n; ++l) {
    const double a = 0.3 / l;
    std::vector<TrigTerm> terms{factor_term(a, {f1(l, 1.0)}),
                                factor_term(0.5 * a, {f1(l, 2.0, 0.4), f1(l - 1, 1.0)})};
    layers.push_back(Layer::trig(l, 1, terms));
  }
  return Hierarchy(1, ScaleSchedule::geometric(0.5), layers);
}

// Joint harmonic mean of A_n over y_{k+1..n} on a fine midpoint grid.
double joint_harmonic_mean(const Hierarchy& h, int n, const Point& y, int fine) {
  const int k = static_cast<int>(y.size()) - 1;
  const int free = n - k;
  long total = 1;
  for (int i = 0; i < free; ++i) total *= fine;
  double s = 0.0;
  Point z = y;
  z.resize(n + 1, make_vec(0.0));
  for (long idx = 0; idx < total; ++idx) {
    long r = idx;
    for (int j = k + 1; j <= n; ++j) {
      z[j] = make_vec((r % fine + 0.5) / fine);
      r /= fine;
    }
    s += 1.0 / eval_partial_sum(h, n, z)(0, 0);
  }
  return total / s;
}

}  // namespace

TEST(Intermediate, BaseLevelIsThePartialSum) {
  auto h = coupled(2);
  IntermediateEvaluator ev(h, 2);
  const Point y{make_vec(0.3), make_vec(0.7), make_vec(0.11)};
  const Mat a = ev.eval(2, y);
  const Mat b = eval_partial_sum(h, 2, y);
  EXPECT_EQ(a(0, 0), b(0, 0));
}

TEST(Intermediate, TwoLayerHarmonicMean) {
  // B_0 = 2, B_1 = 0.5 cos(2 pi y_1): A_hat = sqrt(4 - 1/4)
  Hierarchy h(1, ScaleSchedule::geometric(0.5),
              {Layer::trig(0, 1, {const_term(2.0, 1)}), Layer::trig(1, 1, {cos_term(0.5, 1, 1.0)})});
  IntermediateEvaluator ev(h, 1);
  EXPECT_NEAR(ev.eval(0, {make_vec(0.4)})(0, 0), std::sqrt(3.75), 1e-12);
}

TEST(Intermediate, MeanZeroLayerAddsOnlyTheCorrectorTerm) {
  // d = 2, B_1(y_1) with zero mean and no dependence on y_0
  auto b0 = Layer::trig(0, 2, {const_term(2.0, 2)});
  Mat c(2, 2);
  c << 0.4, 0.1, 0.1, 0.2;
  auto b1 = Layer::trig(1, 2, {TrigTerm{c, {Factor{1, make_vec(1.0, 1.0), 0.3}}}});
  Hierarchy h(2, ScaleSchedule::geometric(0.5), {b0, b1});
  EvaluatorOptions opt;
  opt.cell_n = 16;
  IntermediateEvaluator ev(h, 1, opt);
  const Mat bkn = ev.tail_matrix(0, {make_vec(0.2, 0.6)});

  auto f = cell::MatrixField::sample(2, 16, [&](const Vec& y) { return Mat(2.0 * identity(2) + b1.eval({Vec::Zero(2), y})); });
  auto sol = cell::solve_corrector(f, h.mu());
  Mat corrector_term = Mat::Zero(2, 2);
  for (int p = 0; p < f.size(); ++p) {
    const Mat b = f.values[p] - 2.0 * identity(2);
    Mat g(2, 2);
    for (int l = 0; l < 2; ++l) {
      for (int j = 0; j < 2; ++j) g(l, j) = sol.grad_chi[j][l][p];
    }
    corrector_term += b * g / f.size();
  }
  EXPECT_LE(op_norm(bkn - (2.0 * identity(2) + corrector_term)), 1e-9);
  EXPECT_LT(min_rayleigh(corrector_term), 0.0);
}

TEST(Intermediate, NestedMatchesJointHarmonicMean) {
  for (int n = 1; n <= 3; ++n) {
    auto h = coupled(n);
    IntermediateEvaluator ev(h, n);
    std::mt19937_64 rng(n);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < n; ++k) {
      for (int s = 0; s < 3; ++s) {
        Point y{make_vec(u(rng))};
        for (int j = 1; j <= k; ++j) y.push_back(make_vec(u(rng)));
        const double oracle = joint_harmonic_mean(h, n, y, n == 3 ? 48 : 96);
        ASSERT_NEAR(ev.eval(k, y)(0, 0), oracle, 1e-9) << "n=" << n << " k=" << k;
      }
    }
  }
}

TEST(Intermediate, BudgetAndArguments) {
  auto h = weierstrass(0.25, 0.5);
  EXPECT_THROW(IntermediateEvaluator(h, 5), BudgetError);
  EvaluatorOptions opt;
  opt.budget = 6;
  EXPECT_NO_THROW(IntermediateEvaluator(h, 5, opt));
  IntermediateEvaluator ev(h, 2);
  EXPECT_THROW(ev.eval(3, {make_vec(0.1)}), InputError);
  EXPECT_THROW(ev.eval(1, {make_vec(0.1)}), InputError);
  EXPECT_THROW(ev.eval(0, {make_vec(1.5)}), DomainError);
}

TEST(Intermediate, LostEllipticityPropagates) {
  Hierarchy h(1, ScaleSchedule::geometric(0.5),
              {Layer::trig(0, 1, {const_term(1.0, 1)}), Layer::trig(1, 1, {cos_term(0.95, 1, 1.0)})},
              std::nullopt, 0.5);
  IntermediateEvaluator ev(h, 1);
  EXPECT_THROW(ev.eval(0, {make_vec(0.5)}), InputError);
}

TEST(Intermediate, TwoDimensionalLaminate) {
  auto b0 = Layer::trig(0, 2, {const_term(2.0, 2)});
  auto b1 = Layer::trig(1, 2, {TrigTerm{0.5 * identity(2), {Factor{1, make_vec(1.0, 0.0), 0.0}}}});
  Hierarchy h(2, ScaleSchedule::geometric(0.5), {b0, b1});
  EvaluatorOptions opt;
  opt.cell_n = 16;
  IntermediateEvaluator ev(h, 1, opt);
  const Mat a = ev.eval(0, {make_vec(0.5, 0.5)});
  EXPECT_NEAR(a(0, 0), std::sqrt(3.75), 1e-9);
  EXPECT_NEAR(a(1, 1), 2.0, 1e-9);
  EXPECT_NEAR(a(0, 1), 0.0, 1e-9);
}

TEST(Tables, NodesInterpolationAndPersistence) {
  auto h = coupled(2);
  EvaluatorOptions opt;
  opt.slow_n = 17;
  opt.cell_n = 8;
  IntermediateEvaluator ev(h, 2, opt);
  ev.build_tables();
  ASSERT_TRUE(ev.has_tables());
  // table nodes are exact
  const Point node{make_vec(0.25), make_vec(0.375)};
  EXPECT_NEAR(ev.interpolate(1, node)(0, 0), ev.eval(1, node)(0, 0), 1e-13);
  EXPECT_NEAR(ev.interpolate(0, {make_vec(0.5)})(0, 0), ev.eval(0, {make_vec(0.5)})(0, 0), 1e-13);
  EXPECT_EQ(ev.interpolate(2, {make_vec(0.3), make_vec(0.2), make_vec(0.9)})(0, 0),
            eval_partial_sum(h, 2, {make_vec(0.3), make_vec(0.2), make_vec(0.9)})(0, 0));

  const double err = ev.table_error(1, 50);
  EvaluatorOptions coarse = opt;
  coarse.slow_n = 9;
  coarse.cell_n = 4;
  IntermediateEvaluator ev2(h, 2, coarse);
  EXPECT_LT(err, ev2.table_error(1, 50));
  EXPECT_LT(err, 1e-2);

  const std::string path = ::testing::TempDir() + "homoglab_tables.txt";
  ev.save(path);
  IntermediateEvaluator back(h, 2, opt);
  ASSERT_TRUE(back.load(path));
  const Point p{make_vec(0.37), make_vec(0.81)};
  EXPECT_EQ(back.interpolate(1, p)(0, 0), ev.interpolate(1, p)(0, 0));
  EXPECT_FALSE(ev2.load(path));
  std::remove(path.c_str());
}

TEST(Tables, IndependentOfThreadCount) {
  auto h = coupled(2);
  EvaluatorOptions opt;
  opt.slow_n = 9;
  opt.cell_n = 8;
  IntermediateEvaluator one(h, 2, opt);
  opt.threads = 4;
  IntermediateEvaluator four(h, 2, opt);
  const Point p{make_vec(0.61), make_vec(0.05)};
  EXPECT_EQ(one.interpolate(1, p)(0, 0), four.interpolate(1, p)(0, 0));
}

TEST(Homogenized, SingleLayerIsB0) {
  Hierarchy h(1, ScaleSchedule::geometric(0.5), {base_layer()});
  auto r = homogenized_matrix(h, 1e-8, make_vec(0.3));
  EXPECT_EQ(r.truncation.n, 0);
  EXPECT_EQ(r.value(0, 0), base_layer().eval({make_vec(0.3)})(0, 0));
}

TEST(Homogenized, TwoLayerClosedForm) {
  Hierarchy h(1, ScaleSchedule::geometric(0.5), {base_layer(), Layer::trig(1, 1, {cos_term(0.5, 1, 1.0)})});
  EvaluatorOptions opt;
  opt.cell_n = 32;
  for (double x : {0.0, 0.2, 0.75}) {
    auto r = homogenized_matrix(h, 1e-6, make_vec(x), opt);
    const double c = 2.0 + 0.5 * std::sin(kTwoPi * x);
    EXPECT_EQ(r.truncation.n, 1);
    EXPECT_EQ(r.truncation.bound, 0.0);
    EXPECT_NEAR(r.value(0, 0), std::sqrt(c * c - 0.25), 1e-12);
  }
}

TEST(Homogenized, WeierstrassMatchesFineGridHarmonicMean) {
  // ratio 1/4, four fast layers: along s in [0, 1) the fast variables are 4^(j-1) s
  auto h = weierstrass(0.25, 0.25, 4);
  const double x = 0.3;
  const double c = 2.0 + 0.5 * std::sin(kTwoPi * x);
  const int fine = 1 << 16;
  double s = 0.0;
  for (int i = 0; i < fine; ++i) {
    const double t = (i + 0.5) / fine;
    double a = c;
    for (int j = 1; j <= 4; ++j) a += std::pow(0.25, j) * std::cos(kTwoPi * std::pow(4.0, j - 1) * t) / kTwoPi;
    s += 1.0 / a;
  }
  const double oracle = fine / s;
  auto r = homogenized_matrix(h, 1e-3, make_vec(x));
  EXPECT_NEAR(r.value(0, 0), oracle, 1e-3);
  EXPECT_THROW(homogenized_matrix(weierstrass(0.25, 0.25), 1e-3, make_vec(x)), BudgetError);
}

TEST(Bkn, Examples) {
  auto h = coupled(2);
  auto top = bkn_norm_probe(h, 2, 2, 20);
  EXPECT_LE(top.ratio, 1.0);
  EXPECT_EQ(top.identity_defect, 0.0);

  Hierarchy zero(1, ScaleSchedule::geometric(0.5),
                 {base_layer(), Layer::trig(1, 1, {}), Layer::trig(2, 1, {})});
  auto z = bkn_norm_probe(zero, 2, 1, 10);
  EXPECT_LE(z.sup_norm, 1e-15);
  EXPECT_EQ(z.delta_sum, 0.0);

  auto r = bkn_norm_probe(h, 2, 1, 10);
  EXPECT_LE(r.identity_defect, 1e-12);
  EXPECT_FALSE(r.flagged);
  EXPECT_NEAR(r.refined_ratio, r.ratio, 1e-9);

  // sampled sup against the nested quadrature oracle
  IntermediateEvaluator ev(h, 2);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int s = 0; s < 5; ++s) {
    const Point y{make_vec(u(rng)), make_vec(u(rng))};
    const double oracle = joint_harmonic_mean(h, 2, y, 128) - eval_partial_sum(h, 0, y)(0, 0);
    EXPECT_NEAR(ev.tail_matrix(1, y)(0, 0), oracle, 1e-10);
  }
}

TEST(DeltaRecursion, Examples) {
  for (double c0 : {0.0, 1.0, 10.0}) {
    auto st = delta_recursion(std::vector<double>{1.0, 0.0, 0.0, 0.0}, 3, c0);
    EXPECT_EQ(st.values[0], 1.0);
    EXPECT_EQ(st.values[1], 0.0);
    EXPECT_EQ(st.bound[0], 1.0);
    EXPECT_TRUE(st.pass);
  }
  std::vector<double> half(9);
  for (int l = 0; l <= 8; ++l) half[l] = std::pow(0.5, l);
  auto st = delta_recursion(half, 8, 1.0);
  EXPECT_TRUE(st.pass);
  // independent evaluation of both formulas
  double total = 0, weighted = 0;
  for (int l = 0; l <= 8; ++l) {
    total += half[l];
    weighted += l * half[l];
  }
  const double factor = std::exp(weighted) * (1 + total * weighted);
  double v = half[8];
  for (int k = 7; k >= 0; --k) {
    double r = 0;
    for (int l = k + 1; l <= 8; ++l) r += half[l];
    v = half[k] + v + r * v + total * r * r;
    double rk = r + half[k];
    EXPECT_NEAR(st.values[k], v, 1e-14 * v);
    EXPECT_LE(v, factor * rk);
  }
  auto zero = delta_recursion(half, 8, 0.0);
  for (int k = 0; k <= 8; ++k) EXPECT_EQ(zero.values[k], zero.tails[k]);
  for (int k = 0; k <= 8; ++k) EXPECT_EQ(zero.bound[k], zero.tails[k]);

  auto huge = delta_recursion(std::vector<double>{1.0, 100.0, 100.0}, 2, 1e300);
  EXPECT_TRUE(huge.overflow);
  EXPECT_FALSE(huge.pass);

  auto seq = delta_recursion(DeltaSequence::geometric({1.0}, 1.0, 0.5), 8, 1.0);
  EXPECT_TRUE(seq.pass);
  EXPECT_GE(seq.factor, st.factor);
  EXPECT_THROW(delta_recursion(DeltaSequence::power({1.0}, 1.0, 1.5), 4, 1.0), InputError);
}

TEST(DeltaRecursion, RandomInstancesStayBelowTheClosedBound) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 40);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = len(rng);
    std::vector<double> d(n + 1);
    const double scale = std::pow(10.0, -3.0 * u(rng));
    for (auto& v : d) v = scale * u(rng) * (u(rng) < 0.2 ? 0.0 : 1.0) / (1 + trial % 7);
    for (double c0 : {0.0, 1.0, 10.0}) {
      auto st = delta_recursion(d, n, c0);
      ASSERT_TRUE(st.pass || st.overflow) << "trial " << trial;
      if (st.overflow) continue;
      std::vector<long double> dl(d.begin(), d.end());
      auto ext = delta_recursion(dl, n, static_cast<long double>(c0));
      ASSERT_TRUE(ext.pass);
    }
  }
}

TEST(Stability, Examples) {
  auto h = coupled(2);
  auto same = stability_probe(h, h, 0.0, 10);
  EXPECT_EQ(same.measured, 0.0);
  EXPECT_TRUE(same.pass);

  auto constant = [](double c) {
    return Hierarchy(1, ScaleSchedule::geometric(0.5), {Layer::trig(0, 1, {const_term(c, 1)})});
  };
  auto r = stability_probe(constant(2.0), constant(2.1), 0.1, 10);
  EXPECT_NEAR(r.measured, 0.1, 1e-14);
  EXPECT_TRUE(r.pass);

  // a(y) = 2 + sin(2 pi y) vs a + tau
  auto osc = [](double shift) {
    return Hierarchy(1, ScaleSchedule::geometric(0.5),
                     {Layer::trig(0, 1, {const_term(2.0, 1), const_term(shift, 1)}),
                      Layer::trig(1, 1, {cos_term(1.0, 1, 1.0, -kPi / 2)})},
                     std::nullopt, 0.05);
  };
  const double tau = 0.05;
  EvaluatorOptions opt;
  opt.cell_n = 64;
  auto s = stability_probe(osc(0.0), osc(tau), tau, 20, -1, opt);
  EXPECT_TRUE(s.tau_valid);
  EXPECT_TRUE(s.pass);
  const double oracle = std::sqrt(std::pow(2.0 + tau, 2) - 1.0) - std::sqrt(3.0);
  EXPECT_NEAR(s.measured, oracle, 1e-10);
  EXPECT_LT(s.measured, 1.2 * tau);

  Hierarchy other(1, ScaleSchedule::geometric(0.25), {Layer::trig(0, 1, {const_term(2.0, 1)})});
  EXPECT_THROW(stability_probe(constant(2.0), other, 0.1), InputError);
}

// Properties.

TEST(ReiterateProperties, MonotoneTruncationAndLipschitz) {
  auto h = coupled(3);
  const double c = stability_constant(h.mu());
  std::vector<IntermediateEvaluator> evs;
  for (int n = 0; n <= 3; ++n) evs.emplace_back(h, n);
  double lip_sum = 0.0;
  for (int l = 0; l <= 3; ++l) lip_sum += h.layer(l).lip_bound(0);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int s = 0; s < 20; ++s) {
    const Vec x = make_vec(u(rng));
    for (int n = 0; n < 3; ++n) {
      for (int m = n + 1; m <= 3; ++m) {
        const double diff = op_norm(evs[n].eval(0, {x}) - evs[m].eval(0, {x}));
        ASSERT_LE(diff, c * h.delta().range_sum(n + 1, m));
      }
    }
    const Vec x2 = make_vec(u(rng));
    const double slope = op_norm(evs[3].eval(0, {x}) - evs[3].eval(0, {x2})) / std::abs(x(0) - x2(0));
    ASSERT_LE(slope, c * lip_sum);
  }
}

TEST(ReiterateProperties, IntermediateMatricesStayInTheClass) {
  auto h = weierstrass(0.25, 0.5, 3);
  IntermediateEvaluator ev(h, 3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double mu = h.mu();
  for (int s = 0; s < 30; ++s) {
    for (int k = 0; k <= 3; ++k) {
      Point y{make_vec(u(rng))};
      for (int j = 1; j <= k; ++j) y.push_back(make_vec(u(rng)));
      const Mat a = ev.eval(k, y);
      ASSERT_GE(min_rayleigh(a), mu);
      ASSERT_LE(op_norm(a), std::pow(mu, -3.0));
    }
  }
}
