#include "homoglab/cell.hpp"

#include "spectral.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace homoglab::cell {

using detail::cplx;
using detail::Spectral;

namespace {

bool power_of_two(int n) { return n >= 4 && (n & (n - 1)) == 0; }

int grid_size(int dim, int n) { return dim == 1 ? n : n * n; }

Vec grid_node(int dim, int n, int i) {
  if (dim == 1) return make_vec(static_cast<double>(i) / n);
  return make_vec(static_cast<double>(i % n) / n, static_cast<double>(i / n) / n);
}

void check_grid(int dim, int n) {
  if (dim < 1 || dim > kMaxDim) throw InputError("torus dimension must be 1 or 2");
  if (!power_of_two(n)) throw InputError("torus resolution must be a power of two >= 4");
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

TorusField spectral_derivative(Spectral& sp, const TorusField& f, int axis) {
  std::vector<cplx> fh, dh;
  sp.forward(f.values, fh);
  sp.derivative(fh, axis, dh);
  TorusField out(f.dim, f.n);
  sp.inverse(dh, out.values);
  return out;
}

// -div(A grad u), pseudo-spectral with the Nyquist derivative removed.
class CellOperator {
 public:
  CellOperator(const MatrixField& a) : a_(a), sp_(a.dim, a.n), d_(a.dim) {}

  void apply(const std::vector<double>& u, std::vector<double>& out) {
    const int size = sp_.size();
    sp_.forward(u, uh_);
    for (int l = 0; l < d_; ++l) {
      sp_.derivative(uh_, l, tmp_);
      sp_.inverse(tmp_, grad_[l]);
    }
    std::fill(acc_.begin(), acc_.end(), cplx(0.0));
    acc_.resize(size, 0.0);
    for (int r = 0; r < d_; ++r) {
      flux_.resize(size);
      for (int i = 0; i < size; ++i) {
        double s = 0.0;
        for (int l = 0; l < d_; ++l) s += a_.values[i](r, l) * grad_[l][i];
        flux_[i] = s;
      }
      sp_.forward(flux_, fh_);
      sp_.derivative(fh_, r, tmp_);
      for (int i = 0; i < size; ++i) acc_[i] += tmp_[i];
    }
    sp_.inverse(acc_, out);
    for (auto& v : out) v = -v;
  }

  // div(M e^j) for the matrix field M.
  std::vector<double> divergence_column(const MatrixField& m, int j) {
    const int size = sp_.size();
    std::vector<cplx> acc(size, 0.0);
    std::vector<double> col(size);
    for (int r = 0; r < d_; ++r) {
      for (int i = 0; i < size; ++i) col[i] = m.values[i](r, j);
      sp_.forward(col, fh_);
      sp_.derivative(fh_, r, tmp_);
      for (int i = 0; i < size; ++i) acc[i] += tmp_[i];
    }
    std::vector<double> out;
    sp_.inverse(acc, out);
    return out;
  }

  void precondition(const std::vector<double>& r, std::vector<double>& z, double abar) {
    sp_.forward(r, fh_);
    sp_.inverse_laplacian(fh_, abar);
    sp_.inverse(fh_, z);
    for (auto& v : z) v = -v;
  }

  void project(std::vector<double>& u) {
    sp_.forward(u, fh_);
    for (int i = 0; i < sp_.size(); ++i) {
      if (sp_.null_mode(i)) fh_[i] = 0.0;
    }
    sp_.inverse(fh_, u);
  }

  Spectral& spectral() { return sp_; }

 private:
  const MatrixField& a_;
  Spectral sp_;
  int d_;
  std::vector<cplx> uh_, tmp_, fh_, acc_;
  std::vector<double> grad_[kMaxDim];
  std::vector<double> flux_;
};

struct KrylovResult {
  std::vector<double> x;
  double residual = 0.0;
  int iterations = 0;
  std::vector<double> history;
  bool converged = false;
};

// Right-preconditioned BiCGSTAB with true-residual restarts.
KrylovResult bicgstab(CellOperator& op, const std::vector<double>& b, double abar, double rtol,
                      int max_iter) {
  const int size = static_cast<int>(b.size());
  KrylovResult res;
  res.x.assign(size, 0.0);
  const double bnorm = norm(b);
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }
  std::vector<double> r(size), rhat, p(size), v(size), y(size), s(size), z(size), t(size), ax(size);
  while (res.iterations < max_iter) {
    op.apply(res.x, ax);
    for (int i = 0; i < size; ++i) r[i] = b[i] - ax[i];
    res.residual = norm(r) / bnorm;
    if (res.residual <= rtol) {
      res.converged = true;
      return res;
    }
    rhat = r;
    double rho = 1.0, alpha = 1.0, omega = 1.0;
    std::fill(p.begin(), p.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
    while (res.iterations < max_iter) {
      ++res.iterations;
      const double rho_new = dot(rhat, r);
      if (rho_new == 0.0 || omega == 0.0) {
        break;
      }
      const double beta = (rho_new / rho) * (alpha / omega);
      rho = rho_new;
      for (int i = 0; i < size; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
      op.precondition(p, y, abar);
      op.apply(y, v);
      const double rv = dot(rhat, v);
      if (rv == 0.0) {
        break;
      }
      alpha = rho / rv;
      for (int i = 0; i < size; ++i) s[i] = r[i] - alpha * v[i];
      if (norm(s) / bnorm <= 0.5 * rtol) {
        for (int i = 0; i < size; ++i) res.x[i] += alpha * y[i];
        res.history.push_back(norm(s) / bnorm);
        break;
      }
      op.precondition(s, z, abar);
      op.apply(z, t);
      const double tt = dot(t, t);
      omega = tt == 0.0 ? 0.0 : dot(t, s) / tt;
      for (int i = 0; i < size; ++i) {
        res.x[i] += alpha * y[i] + omega * z[i];
        r[i] = s[i] - omega * t[i];
      }
      const double rn = norm(r) / bnorm;
      res.history.push_back(rn);
      if (rn <= 0.5 * rtol) break;
    }
  }
  op.apply(res.x, ax);
  for (int i = 0; i < size; ++i) r[i] = b[i] - ax[i];
  res.residual = norm(r) / bnorm;
  res.converged = res.residual <= rtol;
  return res;
}

}  // namespace

// ---------------------------------------------------------------- fields

TorusField::TorusField(int dim_, int n_, double fill)
    : dim(dim_), n(n_), values(grid_size(dim_, n_), fill) {}

Vec TorusField::node(int i) const { return grid_node(dim, n, i); }

double TorusField::mean() const {
  double s = 0.0;
  for (double v : values) s += v;
  return values.empty() ? 0.0 : s / values.size();
}

double TorusField::l2() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return values.empty() ? 0.0 : std::sqrt(s / values.size());
}

double TorusField::max_abs() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

MatrixField MatrixField::sample(int dim, int n, const std::function<Mat(const Vec&)>& fn) {
  check_grid(dim, n);
  MatrixField f;
  f.dim = dim;
  f.n = n;
  const int size = grid_size(dim, n);
  f.values.reserve(size);
  for (int i = 0; i < size; ++i) {
    Mat m = fn(grid_node(dim, n, i));
    if (m.rows() != dim || m.cols() != dim) throw InputError("coefficient sample has wrong shape");
    f.values.push_back(m);
  }
  return f;
}

Vec MatrixField::node(int i) const { return grid_node(dim, n, i); }

Mat MatrixField::mean() const {
  Mat s = Mat::Zero(dim, dim);
  for (const auto& m : values) s += m;
  return s / static_cast<double>(values.size());
}

TorusField MatrixField::component(int r, int c) const {
  TorusField t(dim, n);
  for (int i = 0; i < size(); ++i) t[i] = values[i](r, c);
  return t;
}

FourierInterpolant::FourierInterpolant(const TorusField& f) : dim_(f.dim), n_(f.n) {
  Spectral sp(f.dim, f.n);
  sp.forward(f.values, coef_);
  const double scale = 1.0 / f.size();
  for (auto& c : coef_) c *= scale;
}

namespace {

// (frequency, weight) pairs along one axis; the Nyquist mode is split evenly.
template <typename Fn>
void for_axis_modes(int n, int i, Fn&& fn) {
  if (2 * i < n) {
    fn(i, 1.0);
  } else if (2 * i == n) {
    fn(n / 2, 0.5);
    fn(-n / 2, 0.5);
  } else {
    fn(i - n, 1.0);
  }
}

}  // namespace

double FourierInterpolant::operator()(const Vec& y) const {
  double s = 0.0;
  if (dim_ == 1) {
    for (int i = 0; i < n_; ++i) {
      for_axis_modes(n_, i, [&](int k, double w) {
        s += w * (coef_[i] * std::polar(1.0, kTwoPi * k * y(0))).real();
      });
    }
    return s;
  }
  for (int i1 = 0; i1 < n_; ++i1) {
    for (int i0 = 0; i0 < n_; ++i0) {
      const cplx c = coef_[i0 + n_ * i1];
      for_axis_modes(n_, i0, [&](int k0, double w0) {
        for_axis_modes(n_, i1, [&](int k1, double w1) {
          s += w0 * w1 * (c * std::polar(1.0, kTwoPi * (k0 * y(0) + k1 * y(1)))).real();
        });
      });
    }
  }
  return s;
}

double FourierInterpolant::derivative(const Vec& y, int axis) const {
  double s = 0.0;
  if (dim_ == 1) {
    for (int i = 0; i < n_; ++i) {
      for_axis_modes(n_, i, [&](int k, double w) {
        s += w * (coef_[i] * cplx(0.0, kTwoPi * k) * std::polar(1.0, kTwoPi * k * y(0))).real();
      });
    }
    return s;
  }
  for (int i1 = 0; i1 < n_; ++i1) {
    for (int i0 = 0; i0 < n_; ++i0) {
      const cplx c = coef_[i0 + n_ * i1];
      for_axis_modes(n_, i0, [&](int k0, double w0) {
        for_axis_modes(n_, i1, [&](int k1, double w1) {
          const double k = axis == 0 ? k0 : k1;
          s += w0 * w1 *
               (c * cplx(0.0, kTwoPi * k) * std::polar(1.0, kTwoPi * (k0 * y(0) + k1 * y(1)))).real();
        });
      });
    }
  }
  return s;
}

// ---------------------------------------------------------------- solves

double harmonic_mean(const TorusField& a) {
  double s = 0.0;
  for (double v : a.values) {
    if (!(v > 0.0)) throw InputError("harmonic mean needs positive samples");
    s += 1.0 / v;
  }
  return a.values.size() / s;
}

CellSolution solve_corrector(const MatrixField& a, double mu, const CellOptions& opt,
                             const MatrixField* rhs_part) {
  check_grid(a.dim, a.n);
  const int d = a.dim;
  const int size = a.size();
  for (int i = 0; i < size; ++i) {
    if (min_rayleigh(a.values[i]) < mu * (1.0 - 1e-9)) {
      std::ostringstream os;
      os << "coefficient not elliptic with mu = " << mu << " at node " << i;
      throw InputError(os.str());
    }
  }
  if (rhs_part && (rhs_part->dim != d || rhs_part->n != a.n)) {
    throw InputError("split coefficient lives on a different grid");
  }
  CellSolution sol;
  sol.dim = d;
  sol.n = a.n;
  Spectral sp(d, a.n);

  if (d == 1) {
    TorusField coeff = a.component(0, 0);
    const double ahat = harmonic_mean(coeff);
    TorusField dchi(1, a.n);
    for (int i = 0; i < size; ++i) dchi[i] = ahat / coeff[i] - 1.0;
    std::vector<cplx> h;
    sp.forward(dchi.values, h);
    for (int i = 0; i < size; ++i) {
      const int k = sp.freq(i);
      h[i] = k == 0 ? cplx(0.0) : h[i] / cplx(0.0, kTwoPi * k);
    }
    TorusField chi(1, a.n);
    sp.inverse(h, chi.values);
    sol.chi.push_back(chi);
    sol.grad_chi.push_back({dchi});
    sol.residuals.push_back(0.0);
    sol.iterations.push_back(0);
    sol.histories.emplace_back();
    sol.closed_form = true;
    return sol;
  }

  CellOperator op(a);
  double abar = 0.0;
  for (const auto& m : a.values) abar += m.trace() / d;
  abar /= size;
  for (int j = 0; j < d; ++j) {
    std::vector<double> b = op.divergence_column(rhs_part ? *rhs_part : a, j);
    op.project(b);
    KrylovResult kr = bicgstab(op, b, abar, opt.rtol, opt.max_iter);
    if (!kr.converged) {
      std::ostringstream os;
      os << "cell solve for direction " << j << " stalled at relative residual " << kr.residual
         << " after " << kr.iterations << " iterations; history:";
      for (std::size_t i = 0; i < kr.history.size(); i += std::max<std::size_t>(1, kr.history.size() / 10)) {
        os << " " << kr.history[i];
      }
      throw SolverError(os.str());
    }
    op.project(kr.x);
    TorusField chi(d, a.n);
    chi.values = kr.x;
    const double m = chi.mean();
    for (auto& v : chi.values) v -= m;
    std::vector<TorusField> grads;
    for (int l = 0; l < d; ++l) grads.push_back(spectral_derivative(sp, chi, l));
    sol.chi.push_back(std::move(chi));
    sol.grad_chi.push_back(std::move(grads));
    sol.residuals.push_back(kr.residual);
    sol.iterations.push_back(kr.iterations);
    sol.histories.push_back(std::move(kr.history));
  }
  return sol;
}

Mat homogenize(const MatrixField& a, double mu, const CellOptions& opt) {
  if (a.dim != 1) {
    auto sol = solve_corrector(a, mu, opt);
    return effective_matrix(a, sol);
  }
  check_grid(1, a.n);
  double s = 0.0;
  for (const auto& m : a.values) {
    const double v = m(0, 0);
    if (v < mu * (1.0 - 1e-9)) {
      std::ostringstream os;
      os << "coefficient not elliptic with mu = " << mu << " (sample " << v << ")";
      throw InputError(os.str());
    }
    s += 1.0 / v;
  }
  return Mat::Constant(1, 1, a.values.size() / s);
}

Mat effective_matrix(const MatrixField& a, const CellSolution& sol) {
  const int d = a.dim;
  if (sol.dim != d || sol.n != a.n) throw InputError("cell solution does not match the coefficient grid");
  Mat out = Mat::Zero(d, d);
  for (int p = 0; p < a.size(); ++p) {
    const Mat& m = a.values[p];
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        double v = m(i, j);
        for (int l = 0; l < d; ++l) v += m(i, l) * sol.grad_chi[j][l][p];
        out(i, j) += v;
      }
    }
  }
  return out / static_cast<double>(a.size());
}

const std::vector<TorusField>& flux_corrector(const MatrixField& a, CellSolution& sol,
                                              const Mat& ahat, double mean_tol) {
  const int d = a.dim;
  const int size = a.size();
  std::vector<TorusField> f(d * d, TorusField(d, a.n));
  double fmax = 0.0;
  for (int p = 0; p < size; ++p) {
    const Mat& m = a.values[p];
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        double v = m(i, j) - ahat(i, j);
        for (int l = 0; l < d; ++l) v += m(i, l) * sol.grad_chi[j][l][p];
        f[i * d + j][p] = v;
        fmax = std::max(fmax, std::abs(v));
      }
    }
  }
  double defect = 0.0;
  for (const auto& fij : f) defect = std::max(defect, std::abs(fij.mean()));
  sol.flux_mean_defect = defect;
  if (defect > mean_tol * std::max(1.0, op_norm(ahat))) {
    std::ostringstream os;
    os << "mean of the flux defect is " << defect << "; the effective matrix is inconsistent";
    throw InputError(os.str());
  }
  sol.effective = ahat;
  sol.phi.assign(d * d * d, TorusField(d, a.n));
  Spectral sp(d, a.n);
  std::vector<std::vector<cplx>> fh(d * d);
  for (int q = 0; q < d * d; ++q) sp.forward(f[q].values, fh[q]);
  std::vector<cplx> t1, t2;
  for (int k = 0; k < d; ++k) {
    for (int i = k + 1; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        sp.derivative(fh[i * d + j], k, t1);
        sp.derivative(fh[k * d + j], i, t2);
        for (int p = 0; p < size; ++p) t1[p] -= t2[p];
        sp.inverse_laplacian(t1, 1.0);
        TorusField phi(d, a.n);
        sp.inverse(t1, phi.values);
        TorusField neg = phi;
        for (auto& v : neg.values) v = -v;
        sol.phi[(k * d + i) * d + j] = std::move(phi);
        sol.phi[(i * d + k) * d + j] = std::move(neg);
      }
    }
  }
  double res = 0.0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      TorusField div(d, a.n);
      for (int k = 0; k < d; ++k) {
        TorusField dk = spectral_derivative(sp, sol.phi[(k * d + i) * d + j], k);
        for (int p = 0; p < size; ++p) div[p] += dk[p];
      }
      for (int p = 0; p < size; ++p) res = std::max(res, std::abs(div[p] - f[i * d + j][p]));
    }
  }
  sol.flux_residual = res / std::max({fmax, op_norm(ahat), 1e-300});
  return sol.phi;
}

CellSolution solve_cell(const MatrixField& a, double mu, const CellOptions& opt) {
  CellSolution sol = solve_corrector(a, mu, opt);
  const Mat ahat = effective_matrix(a, sol);
  flux_corrector(a, sol, ahat);
  return sol;
}

// ---------------------------------------------------------------- size report

namespace {

struct PointMeasure {
  CellSolution sol;
  Mat ahat;
  MatrixField a;
  MatrixField e1;
};

PointMeasure measure_at(const SplitCoefficient& split, const Vec& x, int n, double mu,
                        const CellOptions& opt) {
  PointMeasure pm;
  const Mat e0 = split.e0(x);
  pm.e1 = MatrixField::sample(split.dim, n, [&](const Vec& y) { return split.e1(x, y); });
  pm.a = pm.e1;
  for (auto& m : pm.a.values) m += e0;
  pm.sol = solve_corrector(pm.a, mu, opt, &pm.e1);
  pm.ahat = effective_matrix(pm.a, pm.sol);
  flux_corrector(pm.a, pm.sol, pm.ahat);
  return pm;
}

double h1_norm(Spectral& sp, const std::vector<TorusField>& fields) {
  double s = 0.0;
  for (const auto& f : fields) {
    s += f.l2() * f.l2();
    for (int l = 0; l < f.dim; ++l) {
      const double g = spectral_derivative(sp, f, l).l2();
      s += g * g;
    }
  }
  return std::sqrt(s);
}

std::vector<TorusField> difference(const std::vector<TorusField>& a, const std::vector<TorusField>& b,
                                   double scale) {
  std::vector<TorusField> out = a;
  for (std::size_t q = 0; q < a.size(); ++q) {
    for (int p = 0; p < a[q].size(); ++p) out[q][p] = (a[q][p] - b[q][p]) * scale;
  }
  return out;
}

double sup_a_minus_ahat(const PointMeasure& pm) {
  double s = 0.0;
  for (const auto& m : pm.a.values) s = std::max(s, op_norm(m - pm.ahat));
  return s;
}

CorrectorSizeReport size_report_at(const SplitCoefficient& split, const std::vector<Vec>& xs, int n,
                                   double mu, const CellOptions& opt, double h) {
  CorrectorSizeReport r;
  r.n = n;
  const int d = split.dim;
  Spectral sp(d, n);
  double grad_a = 0.0, grad_e1 = 0.0;
  for (const auto& x : xs) {
    PointMeasure pm = measure_at(split, x, n, mu, opt);
    for (const auto& m : pm.e1.values) r.e1_norm = std::max(r.e1_norm, op_norm(m));
    r.chi_norm = std::max(r.chi_norm, h1_norm(sp, pm.sol.chi));
    r.phi_norm = std::max(r.phi_norm, h1_norm(sp, pm.sol.phi));
    r.a_minus_ahat = std::max(r.a_minus_ahat, sup_a_minus_ahat(pm));
    for (int axis = 0; axis < d; ++axis) {
      Vec xp = x, xm = x;
      xp(axis) += h;
      xm(axis) -= h;
      PointMeasure pp = measure_at(split, xp, n, mu, opt);
      PointMeasure pmm = measure_at(split, xm, n, mu, opt);
      const double s = 1.0 / (2 * h);
      r.grad_chi_norm = std::max(r.grad_chi_norm, h1_norm(sp, difference(pp.sol.chi, pmm.sol.chi, s)));
      r.grad_phi_norm = std::max(r.grad_phi_norm, h1_norm(sp, difference(pp.sol.phi, pmm.sol.phi, s)));
      for (int p = 0; p < pp.a.size(); ++p) {
        const Mat da = (pp.a.values[p] - pmm.a.values[p]) * s;
        const Mat de1 = (pp.e1.values[p] - pmm.e1.values[p]) * s;
        grad_a = std::max(grad_a, op_norm(da));
        grad_e1 = std::max(grad_e1, op_norm(de1));
        r.grad_a_minus_ahat =
            std::max(r.grad_a_minus_ahat, op_norm(da - (pp.ahat - pmm.ahat) * s));
      }
    }
  }
  r.grad_data = grad_a * r.e1_norm + grad_e1;
  const double zero = r.chi_norm + r.phi_norm + r.a_minus_ahat;
  const double one = r.grad_chi_norm + r.grad_phi_norm + r.grad_a_minus_ahat;
  r.ratio_zero = r.e1_norm > 0.0 ? zero / r.e1_norm : 0.0;
  r.ratio_one = r.grad_data > 0.0 ? one / r.grad_data : 0.0;
  return r;
}

}  // namespace

CorrectorSizeReport corrector_size_report(const SplitCoefficient& split, const std::vector<Vec>& xs,
                                          int n, double mu, const CellOptions& opt, double fd_step) {
  if (xs.empty()) throw InputError("corrector_size_report needs sample points");
  if (!split.e0 || !split.e1) throw InputError("split coefficient needs E_0 and E_1");
  CorrectorSizeReport r = size_report_at(split, xs, n, mu, opt, fd_step);
  const CorrectorSizeReport fine = size_report_at(split, xs, 2 * n, mu, opt, fd_step);
  r.ratio_zero_refined = fine.ratio_zero;
  r.ratio_one_refined = fine.ratio_one;
  r.refinement_stable = fine.ratio_zero <= 1.1 * r.ratio_zero + 1e-12 &&
                        fine.ratio_one <= 1.1 * r.ratio_one + 1e-12;
  return r;
}

void write_columns(std::ostream& os, const CellSolution& sol) {
  const int d = sol.dim;
  std::vector<std::string> names{"y1"};
  if (d == 2) names.push_back("y2");
  for (int j = 0; j < d; ++j) names.push_back("chi" + std::to_string(j + 1));
  std::vector<const TorusField*> phis;
  for (int k = 0; k < d && !sol.phi.empty(); ++k) {
    for (int i = k + 1; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        names.push_back("phi" + std::to_string(k + 1) + std::to_string(i + 1) + std::to_string(j + 1));
        phis.push_back(&sol.phi_at(k, i, j));
      }
    }
  }
  os << "#";
  for (const auto& n : names) os << " " << n;
  os << "\n" << std::setprecision(17);
  const int size = grid_size(d, sol.n);
  for (int p = 0; p < size; ++p) {
    const Vec y = grid_node(d, sol.n, p);
    os << y(0);
    if (d == 2) os << " " << y(1);
    for (int j = 0; j < d; ++j) os << " " << sol.chi[j][p];
    for (const auto* f : phis) os << " " << (*f)[p];
    os << "\n";
  }
}

}  // namespace homoglab::cell
