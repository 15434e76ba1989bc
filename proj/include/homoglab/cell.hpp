#ifndef HOMOGLAB_CELL_HPP
#define HOMOGLAB_CELL_HPP

#include "homoglab/core.hpp"

#include <complex>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace homoglab::cell {

/// Scalar samples at the nodes (i0/N, i1/N) of [0,1)^d, index i0 + N i1.
struct TorusField {
  int dim = 1;
  int n = 0;
  std::vector<double> values;

  TorusField() = default;
  TorusField(int dim, int n, double fill = 0.0);

  int size() const { return static_cast<int>(values.size()); }
  double& operator[](int i) { return values[i]; }
  double operator[](int i) const { return values[i]; }
  /// Node coordinates of flat index i.
  Vec node(int i) const;
  /// Trapezoid mean (exact node average on the periodic grid).
  double mean() const;
  /// Root mean square.
  double l2() const;
  double max_abs() const;
};

/// d x d matrix samples on the same grid.
struct MatrixField {
  int dim = 1;
  int n = 0;
  std::vector<Mat> values;

  static MatrixField sample(int dim, int n, const std::function<Mat(const Vec&)>& fn);
  int size() const { return static_cast<int>(values.size()); }
  Vec node(int i) const;
  Mat mean() const;
  /// Component (r, c) as a scalar field.
  TorusField component(int r, int c) const;
};

/// Trigonometric interpolant of a TorusField (band-limited, Nyquist split).
class FourierInterpolant {
 public:
  explicit FourierInterpolant(const TorusField& f);
  double operator()(const Vec& y) const;
  /// Derivative along axis.
  double derivative(const Vec& y, int axis) const;

 private:
  int dim_;
  int n_;
  std::vector<std::complex<double>> coef_;
};

struct CellOptions {
  double rtol = 1e-10;
  int max_iter = 500;
};

struct CellSolution {
  int dim = 1;
  int n = 0;
  std::vector<TorusField> chi;                     // chi^j
  std::vector<std::vector<TorusField>> grad_chi;   // grad_chi[j][l] = d_l chi^j
  std::vector<double> residuals;                   // relative residual per direction
  std::vector<int> iterations;
  std::vector<std::vector<double>> histories;      // residual history per direction
  bool closed_form = false;
  // Filled by flux_corrector.
  Mat effective;
  std::vector<TorusField> phi;  // phi[(k d + i) d + j]
  double flux_residual = 0.0;   // max |sum_k d_k phi_kij - F_ij| / max |F|
  double flux_mean_defect = 0.0;

  const TorusField& phi_at(int k, int i, int j) const { return phi[(k * dim + i) * dim + j]; }
};

/// -div(A grad chi^j) = div(A e^j) on the torus, zero mean. When rhs_part is
/// given (the y-dependent part E_1 of A = E_0 + E_1) the right-hand side is
/// div(E_1 e^j). d = 1 uses the closed form chi' = a_hat / a - 1.
CellSolution solve_corrector(const MatrixField& a, double mu, const CellOptions& opt = {},
                             const MatrixField* rhs_part = nullptr);

/// A_hat = mean(A + A grad chi).
Mat effective_matrix(const MatrixField& a, const CellSolution& sol);

/// Solves Lap phi_kij = d_k F_ij - d_i F_kj with F = A + A grad chi - A_hat;
/// stores phi, the flux identity residual and the mean defect of F in sol. Throws
/// InputError when mean(F) exceeds mean_tol * max(1, |A_hat|).
const std::vector<TorusField>& flux_corrector(const MatrixField& a, CellSolution& sol,
                                              const Mat& ahat, double mean_tol = 1e-8);

/// Effective matrix only; d = 1 skips the corrector and returns the harmonic mean.
Mat homogenize(const MatrixField& a, double mu, const CellOptions& opt = {});

/// Corrector, effective matrix and flux corrector in one call.
CellSolution solve_cell(const MatrixField& a, double mu, const CellOptions& opt = {});

/// Harmonic mean of the node samples (d = 1 effective coefficient).
double harmonic_mean(const TorusField& a);

/// A = E_0(x) + E_1(x, y).
struct SplitCoefficient {
  int dim = 1;
  std::function<Mat(const Vec& x)> e0;
  std::function<Mat(const Vec& x, const Vec& y)> e1;
};

struct CorrectorSizeReport {
  int n = 0;
  double e1_norm = 0.0;          // sup |E_1|
  double grad_data = 0.0;        // sup |grad_x A| sup |E_1| + sup |grad_x E_1|
  double chi_norm = 0.0;         // max_x |chi|_{H^1}
  double phi_norm = 0.0;         // max_x |phi|_{H^1}
  double a_minus_ahat = 0.0;     // sup |A - A_hat|
  double grad_chi_norm = 0.0;    // max_x |grad_x chi|_{H^1}
  double grad_phi_norm = 0.0;
  double grad_a_minus_ahat = 0.0;
  double ratio_zero = 0.0;       // (chi + phi + A - A_hat) / |E_1|
  double ratio_one = 0.0;        // gradient side / grad_data
  double ratio_zero_refined = 0.0;
  double ratio_one_refined = 0.0;
  bool refinement_stable = true;
};

/// Measures the quantities of the corrector size estimate at the sample
/// points xs (finite differences of step fd_step in x) at resolution n and 2n.
CorrectorSizeReport corrector_size_report(const SplitCoefficient& split, const std::vector<Vec>& xs,
                                          int n, double mu, const CellOptions& opt = {},
                                          double fd_step = 1e-4);

/// Columnar dump: y1 [y2] chi^1 .. chi^d [phi_kij for k < i].
void write_columns(std::ostream& os, const CellSolution& sol);

}  // namespace homoglab::cell

#endif  // HOMOGLAB_CELL_HPP
