#include "homoglab/bvp.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace homoglab::bvp {

namespace {

// 4-point Gauss-Legendre on [-1, 1].
constexpr std::array<double, 4> kGaussX{-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                        0.8611363115940526};
constexpr std::array<double, 4> kGaussW{0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                        0.3478548451374538};
// 3-point rule for the 2D tensor quadrature.
constexpr std::array<double, 3> kGauss3X{-0.7745966692414834, 0.0, 0.7745966692414834};
constexpr std::array<double, 3> kGauss3W{5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};

double boundary_distance(const Vec& x) {
  double d = std::min(x(0), 1.0 - x(0));
  if (x.size() == 2) d = std::min({d, x(1), 1.0 - x(1)});
  return d;
}

int locate(double x, int n) { return std::clamp(static_cast<int>(std::floor(x * n)), 0, n - 1); }

// Cubic Hermite on [0, h] from values and slopes at both ends.
double hermite(double s, double h, double v0, double d0, double v1, double d1) {
  const double t = s / h;
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * v0 + (t3 - 2 * t2 + t) * h * d0 + (-2 * t3 + 3 * t2) * v1 + (t3 - t2) * h * d1;
}

void add_interval(std::vector<QuadraturePoint>& out, double a, double b) {
  if (!(b > a)) return;
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (int q = 0; q < 4; ++q) out.push_back({make_vec(mid + half * kGaussX[q]), half * kGaussW[q]});
}

bool gradient_norm(Norm which) { return which == Norm::H1 || which == Norm::H1Layer || which == Norm::H1Complement; }

}  // namespace

// ---------------------------------------------------------------- fields

double FieldSolution::value(const Vec& x) const {
  if (dim_ == 1) {
    const double h = 1.0 / n_;
    const int i = locate(x(0), n_);
    const double s = x(0) - i * h;
    if (du_.empty()) return u_[i] + (u_[i + 1] - u_[i]) * s / h;
    return hermite(s, h, u_[i], du_[i], u_[i + 1], du_[i + 1]);
  }
  const double h = 1.0 / n_;
  const int i = locate(x(0), n_), j = locate(x(1), n_);
  const double s = x(0) / h - i, t = x(1) / h - j;
  const int m = n_ + 1;
  return (1 - s) * (1 - t) * u_[i + m * j] + s * (1 - t) * u_[i + 1 + m * j] + (1 - s) * t * u_[i + m * (j + 1)] +
         s * t * u_[i + 1 + m * (j + 1)];
}

Vec FieldSolution::gradient(const Vec& x) const {
  const double h = 1.0 / n_;
  if (dim_ == 1) {
    const int i = locate(x(0), n_);
    if (!a1_) return make_vec((u_[i + 1] - u_[i]) / h);
    const double s = x(0) - i * h;
    const double f = hermite(s, h, big_f_[i], small_f_[i], big_f_[i + 1], small_f_[i + 1]);
    return make_vec((c_ - f) / a1_(x(0)));
  }
  const int i = locate(x(0), n_), j = locate(x(1), n_);
  const double s = x(0) / h - i, t = x(1) / h - j;
  const int m = n_ + 1;
  const double u00 = u_[i + m * j], u10 = u_[i + 1 + m * j], u01 = u_[i + m * (j + 1)], u11 = u_[i + 1 + m * (j + 1)];
  return make_vec(((1 - t) * (u10 - u00) + t * (u11 - u01)) / h, ((1 - s) * (u01 - u00) + s * (u11 - u10)) / h);
}

FieldSolution from_nodes(int dim, int n, std::vector<double> values) {
  const std::size_t expect = dim == 1 ? n + 1 : static_cast<std::size_t>(n + 1) * (n + 1);
  if (dim < 1 || dim > 2 || n < 1 || values.size() != expect) throw InputError("node values do not match the grid");
  FieldSolution s;
  s.dim_ = dim;
  s.n_ = n;
  s.u_ = std::move(values);
  return s;
}

// ---------------------------------------------------------------- 1D

FieldSolution solve_1d_exact(const Problem& p, int panels) {
  if (p.dim != 1) throw ConfigError("solve_1d_exact needs d = 1");
  if (panels < 1) throw ConfigError("solve_1d_exact needs at least one panel");
  if (!p.a || !p.f || !p.g) throw ConfigError("problem needs a, f and g");
  const double h = 1.0 / panels;
  auto a = [&p](double x) { return p.a(make_vec(x))(0, 0); };
  auto f = [&p](double x) { return p.f(make_vec(x)); };

  std::vector<double> an(panels + 1), am(panels), fn(panels + 1), fm(panels), fq1(panels), fq3(panels);
  for (int i = 0; i <= panels; ++i) {
    an[i] = a(i * h);
    fn[i] = f(i * h);
  }
  for (int i = 0; i < panels; ++i) {
    const double x = i * h;
    am[i] = a(x + 0.5 * h);
    fm[i] = f(x + 0.5 * h);
    fq1[i] = f(x + 0.25 * h);
    fq3[i] = f(x + 0.75 * h);
  }
  const double floor = p.mu > 0.0 ? p.mu * (1.0 - 1e-9) : 0.0;
  for (double v : an) {
    if (!(v > floor)) throw InputError("coefficient not positive on the quadrature grid");
  }
  for (double v : am) {
    if (!(v > floor)) throw InputError("coefficient not positive on the quadrature grid");
  }

  std::vector<double> big(panels + 1, 0.0), big_mid(panels);
  double inv = 0.0, weighted = 0.0;
  for (int i = 0; i < panels; ++i) {
    big_mid[i] = big[i] + h / 12.0 * (fn[i] + 4.0 * fq1[i] + fm[i]);
    big[i + 1] = big_mid[i] + h / 12.0 * (fm[i] + 4.0 * fq3[i] + fn[i + 1]);
    inv += h / 6.0 * (1.0 / an[i] + 4.0 / am[i] + 1.0 / an[i + 1]);
    weighted += h / 6.0 * (big[i] / an[i] + 4.0 * big_mid[i] / am[i] + big[i + 1] / an[i + 1]);
  }
  const double g0 = p.g(make_vec(0.0)), g1 = p.g(make_vec(1.0));
  const double c = (g1 - g0 + weighted) / inv;

  FieldSolution s;
  s.dim_ = 1;
  s.n_ = panels;
  s.c_ = c;
  s.u_.assign(panels + 1, 0.0);
  s.du_.assign(panels + 1, 0.0);
  s.u_[0] = g0;
  for (int i = 0; i <= panels; ++i) s.du_[i] = (c - big[i]) / an[i];
  for (int i = 0; i < panels; ++i) {
    s.u_[i + 1] = s.u_[i] + h / 6.0 * (s.du_[i] + 4.0 * (c - big_mid[i]) / am[i] + s.du_[i + 1]);
  }
  s.big_f_ = std::move(big);
  s.small_f_ = std::move(fn);
  CoefficientFn coef = p.a;
  s.a1_ = [coef](double x) { return coef(make_vec(x))(0, 0); };
  return s;
}

// ---------------------------------------------------------------- 2D

FieldSolution solve_2d(const Problem& p, int n) {
  if (p.dim != 2) throw ConfigError("solve_2d needs d = 2");
  if (n < 16) throw ConfigError("solve_2d needs N >= 16");
  if (!p.a || !p.f || !p.g) throw ConfigError("problem needs a, f and g");
  FieldSolution s;
  s.dim_ = 2;
  s.n_ = n;
  if (p.finest_scale > 0.0 && n < 8.0 / p.finest_scale) {
    std::ostringstream os;
    os << "grid N = " << n << " under-resolves the finest retained scale " << p.finest_scale
       << " (need N >= 8/eps_n = " << std::ceil(8.0 / p.finest_scale) << ")";
    s.warnings_.push_back(os.str());
  }
  const double h = 1.0 / n;
  const int m = n + 1;
  auto node = [&](int i, int j) { return make_vec(i * h, j * h); };
  auto coef = [&](double x, double y) {
    Mat a = p.a(make_vec(x, y));
    if (p.mu > 0.0 && min_rayleigh(a) < p.mu * (1.0 - 1e-9)) {
      std::ostringstream os;
      os << "coefficient not elliptic with mu = " << p.mu << " at (" << x << ", " << y << ")";
      throw InputError(os.str());
    }
    return a;
  };

  s.u_.assign(static_cast<std::size_t>(m) * m, 0.0);
  for (int i = 0; i <= n; ++i) {
    s.u_[i] = p.g(node(i, 0));
    s.u_[i + m * n] = p.g(node(i, n));
    s.u_[m * i] = p.g(node(0, i));
    s.u_[n + m * i] = p.g(node(n, i));
  }

  const int inner = n - 1;
  auto unknown = [&](int i, int j) { return (i - 1) + inner * (j - 1); };
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(inner) * inner * 9);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(inner) * inner);
  const double h2 = h * h;

  // Node-centred coefficient samples reused by the cross terms.
  std::vector<Mat> at_node(static_cast<std::size_t>(m) * m);
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) at_node[i + m * j] = coef(i * h, j * h);
  }

  for (int j = 1; j < n; ++j) {
    for (int i = 1; i < n; ++i) {
      const int row = unknown(i, j);
      rhs(row) += p.f(node(i, j));
      auto add = [&](int ii, int jj, double w) {
        if (ii <= 0 || ii >= n || jj <= 0 || jj >= n) {
          rhs(row) -= w * s.u_[ii + m * jj];
        } else {
          trip.emplace_back(row, unknown(ii, jj), w);
        }
      };
      const double ae = coef((i + 0.5) * h, j * h)(0, 0);
      const double aw = coef((i - 0.5) * h, j * h)(0, 0);
      const double an = coef(i * h, (j + 0.5) * h)(1, 1);
      const double as = coef(i * h, (j - 0.5) * h)(1, 1);
      add(i, j, (ae + aw + an + as) / h2);
      add(i + 1, j, -ae / h2);
      add(i - 1, j, -aw / h2);
      add(i, j + 1, -an / h2);
      add(i, j - 1, -as / h2);
      // -d_x(a12 d_y u) - d_y(a21 d_x u)
      const double a12e = at_node[i + 1 + m * j](0, 1), a12w = at_node[i - 1 + m * j](0, 1);
      const double a21n = at_node[i + m * (j + 1)](1, 0), a21s = at_node[i + m * (j - 1)](1, 0);
      if (a12e != 0.0 || a12w != 0.0 || a21n != 0.0 || a21s != 0.0) {
        const double q = 1.0 / (4.0 * h2);
        add(i + 1, j + 1, -q * (a12e + a21n));
        add(i + 1, j - 1, q * (a12e + a21s));
        add(i - 1, j + 1, q * (a12w + a21n));
        add(i - 1, j - 1, -q * (a12w + a21s));
      }
    }
  }
  Eigen::SparseMatrix<double> mat(rhs.size(), rhs.size());
  mat.setFromTriplets(trip.begin(), trip.end());
  mat.makeCompressed();

  Eigen::VectorXd sol;
  if (n <= 512) {
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(mat);
    if (lu.info() != Eigen::Success) throw SolverError("sparse LU factorization failed (singular system?)");
    sol = lu.solve(rhs);
    if (lu.info() != Eigen::Success) throw SolverError("sparse LU solve failed");
  } else {
    Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::IncompleteLUT<double>> it;
    it.setTolerance(1e-12);
    it.setMaxIterations(20000);
    it.compute(mat);
    sol = it.solve(rhs);
    if (it.info() != Eigen::Success) {
      std::ostringstream os;
      os << "BiCGSTAB did not converge (error " << it.error() << " after " << it.iterations() << " iterations)";
      throw SolverError(os.str());
    }
  }
  for (int j = 1; j < n; ++j) {
    for (int i = 1; i < n; ++i) s.u_[i + m * j] = sol(unknown(i, j));
  }
  return s;
}

// ---------------------------------------------------------------- norms

std::vector<QuadraturePoint> quadrature(int dim, int cells, Norm region, double t) {
  const bool layer = region == Norm::L2Layer || region == Norm::H1Layer;
  const bool complement = region == Norm::L2Complement || region == Norm::H1Complement;
  if ((layer || complement) && !(t > 0.0 && t < 0.5)) throw InputError("layer width must lie in (0, 1/2)");
  std::vector<QuadraturePoint> out;
  const double h = 1.0 / cells;
  if (dim == 1) {
    std::vector<std::pair<double, double>> pieces;
    if (layer) {
      pieces = {{0.0, t}, {1.0 - t, 1.0}};
    } else if (complement) {
      pieces = {{t, 1.0 - t}};
    } else {
      pieces = {{0.0, 1.0}};
    }
    for (int i = 0; i < cells; ++i) {
      for (const auto& [a, b] : pieces) add_interval(out, std::max(a, i * h), std::min(b, (i + 1) * h));
    }
    return out;
  }
  out.reserve(static_cast<std::size_t>(cells) * cells * 9);
  for (int j = 0; j < cells; ++j) {
    for (int i = 0; i < cells; ++i) {
      for (int qa = 0; qa < 3; ++qa) {
        for (int qb = 0; qb < 3; ++qb) {
          Vec x = make_vec((i + 0.5 + 0.5 * kGauss3X[qa]) * h, (j + 0.5 + 0.5 * kGauss3X[qb]) * h);
          const double dist = boundary_distance(x);
          if (layer && dist >= t) continue;
          if (complement && dist < t) continue;
          out.push_back({x, 0.25 * h * h * kGauss3W[qa] * kGauss3W[qb]});
        }
      }
    }
  }
  return out;
}

double norm(const FieldSolution& u, Norm which, double t) {
  double s = 0.0;
  const bool grad = gradient_norm(which);
  for (const auto& q : quadrature(u.dim(), u.cells(), which, t)) {
    s += q.w * (grad ? u.gradient(q.x).squaredNorm() : std::pow(u.value(q.x), 2));
  }
  return std::sqrt(s);
}

double difference_norm(const FieldSolution& u, const FieldSolution& v, Norm which, double t) {
  if (u.dim() != v.dim()) throw InputError("fields live in different dimensions");
  double s = 0.0;
  const bool grad = gradient_norm(which);
  for (const auto& q : quadrature(u.dim(), std::max(u.cells(), v.cells()), which, t)) {
    s += q.w * (grad ? (u.gradient(q.x) - v.gradient(q.x)).squaredNorm() : std::pow(u.value(q.x) - v.value(q.x), 2));
  }
  return std::sqrt(s);
}

// ---------------------------------------------------------------- two-scale defect

double bump(double s) {
  const double r = 1.0 - 4.0 * s * s;
  return r > 0.0 ? r * r * r * r : 0.0;
}

namespace {

double bump_derivative(double s) {
  const double r = 1.0 - 4.0 * s * s;
  return r > 0.0 ? -32.0 * s * r * r * r : 0.0;
}

}  // namespace

double cutoff(double x, double eps) {
  const double dist = std::min(x, 1.0 - x);
  if (dist <= 3.0 * eps) return 0.0;
  if (dist >= 4.0 * eps) return 1.0;
  const double s = (dist - 3.0 * eps) / eps;
  return s * s * (3.0 - 2.0 * s);
}

DefectReport two_scale_defect(const FieldSolution& u_eps, const FieldSolution& u0, const cell::CellSolution& chi,
                              double eps, double width, int mollifier_points) {
  if (u_eps.dim() != 1 || u0.dim() != 1 || chi.dim != 1) throw ConfigError("two_scale_defect is implemented for d = 1");
  if (!(eps > 0.0 && eps < 0.125)) throw InputError("two_scale_defect needs 0 < eps < 1/8");
  if (width <= 0.0) width = eps;
  if (mollifier_points < 4) throw InputError("mollifier needs at least 4 points");

  DefectReport r;
  r.eps = eps;
  r.mollifier_points = mollifier_points;
  r.resampled = u_eps.cells() != u0.cells();
  const cell::FourierInterpolant x_chi(chi.chi[0]);

  // Mollifier weights on a symmetric midpoint stencil, discretely normalized.
  std::vector<double> offset(mollifier_points), w(mollifier_points), dw(mollifier_points);
  double mass = 0.0;
  for (int k = 0; k < mollifier_points; ++k) {
    const double s = -0.5 + (k + 0.5) / mollifier_points;
    offset[k] = s * width;
    w[k] = bump(s);
    dw[k] = bump_derivative(s);
    mass += w[k];
  }
  double check = 0.0;
  for (int k = 0; k < mollifier_points; ++k) {
    w[k] /= mass;
    dw[k] /= mass * width;
    check += w[k];
  }
  r.mollifier_mass_defect = std::abs(check - 1.0);

  r.layer = 4.0 * eps + 0.5 * width;
  const int cells = std::max(u_eps.cells(), u0.cells());
  double w2 = 0.0, g2 = 0.0, layer2 = 0.0, inner2 = 0.0;
  for (const auto& q : quadrature(1, cells)) {
    const double x = q.x(0);
    // G = (eta u0') * phi, G' = (eta u0') * phi'
    double big = 0.0, dbig = 0.0;
    for (int k = 0; k < mollifier_points; ++k) {
      const double z = x - offset[k];
      if (z <= 0.0 || z >= 1.0) continue;
      const double eta = cutoff(z, eps);
      if (eta == 0.0) continue;
      const double v = eta * u0.gradient(make_vec(z))(0);
      big += w[k] * v;
      dbig += dw[k] * v;
    }
    const Vec y = make_vec(x / eps - std::floor(x / eps));
    const double c = x_chi(y), dc = x_chi.derivative(y, 0);
    const double val = u_eps.value(q.x) - u0.value(q.x) - eps * c * big;
    const double der = u_eps.gradient(q.x)(0) - u0.gradient(q.x)(0) - dc * big - eps * c * dbig;
    w2 += q.w * val * val;
    g2 += q.w * der * der;
    if (std::min(x, 1.0 - x) < r.layer) {
      layer2 += q.w * der * der;
    } else {
      inner2 += q.w * der * der;
    }
  }
  r.w_l2 = std::sqrt(w2);
  r.grad_w_l2 = std::sqrt(g2);
  r.grad_ratio = r.grad_w_l2 / std::sqrt(eps);
  r.grad_w_layer = std::sqrt(layer2);
  r.grad_w_interior = std::sqrt(inner2);
  return r;
}

void write_columns(std::ostream& os, const FieldSolution& u) {
  const int n = u.cells();
  os << std::setprecision(17);
  if (u.dim() == 1) {
    os << "# x u\n";
    for (int i = 0; i <= n; ++i) os << static_cast<double>(i) / n << " " << u.nodes()[i] << "\n";
    return;
  }
  os << "# x y u\n";
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) {
      os << static_cast<double>(i) / n << " " << static_cast<double>(j) / n << " " << u.nodes()[i + (n + 1) * j] << "\n";
    }
  }
}

}  // namespace homoglab::bvp
