#ifndef HOMOGLAB_BVP_HPP
#define HOMOGLAB_BVP_HPP

#include "homoglab/cell.hpp"
#include "homoglab/core.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace homoglab::bvp {

using CoefficientFn = std::function<Mat(const Vec&)>;
using ScalarFn = std::function<double(const Vec&)>;

/// -div(A grad u) = f in (0,1)^d, u = g on the boundary.
struct Problem {
  int dim = 1;
  CoefficientFn a;
  ScalarFn f;
  ScalarFn g;
  double mu = 0.0;            // > 0: ellipticity checked on the solve grid
  double finest_scale = 0.0;  // > 0: resolution warning for 2D grids
};

/// Grid solution with interpolation. In d = 1 values are cubic Hermite in
/// (u, u') and u' = (c - F) / a uses the exact coefficient between nodes.
class FieldSolution {
 public:
  int dim() const { return dim_; }
  /// Panels (d = 1) or cells per axis (d = 2).
  int cells() const { return n_; }
  double value(const Vec& x) const;
  Vec gradient(const Vec& x) const;
  /// Node values, d = 1: x_i = i/n; d = 2: index i + (n+1) j.
  const std::vector<double>& nodes() const { return u_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  /// Flux constant c in a u' = c - F (d = 1).
  double flux_constant() const { return c_; }

 private:
  friend FieldSolution solve_1d_exact(const Problem&, int);
  friend FieldSolution solve_2d(const Problem&, int);
  friend FieldSolution from_nodes(int, int, std::vector<double>);

  int dim_ = 1;
  int n_ = 0;
  std::vector<double> u_;
  // d = 1
  std::vector<double> du_, big_f_, small_f_;
  double c_ = 0.0;
  std::function<double(double)> a1_;
  std::vector<std::string> warnings_;
};

/// a u' = c - F(x), F' = f, per-panel composite Simpson; c from the data.
FieldSolution solve_1d_exact(const Problem& p, int panels = 4096);

/// Conservative 5-point (plus cross terms) finite differences on the
/// (N+1)^2 node grid; SparseLU up to N = 512, ILUT/BiCGSTAB beyond.
FieldSolution solve_2d(const Problem& p, int n);

/// Piecewise-linear (d = 1) or bilinear (d = 2) field from node values.
FieldSolution from_nodes(int dim, int n, std::vector<double> values);

enum class Norm { L2, H1, L2Layer, L2Complement, H1Layer, H1Complement };

/// Norm of u (H1 is the seminorm |grad u|). Layer norms integrate over
/// Omega_t = {dist(x, boundary) < t}; complements over the rest.
double norm(const FieldSolution& u, Norm which, double t = 0.0);
/// Same norm of u - v, integrated on the finer of the two grids.
double difference_norm(const FieldSolution& u, const FieldSolution& v, Norm which, double t = 0.0);

/// Gauss points of the finer grid restricted to a region, with weights.
struct QuadraturePoint {
  Vec x;
  double w;
};
std::vector<QuadraturePoint> quadrature(int dim, int cells, Norm region = Norm::L2, double t = 0.0);

/// Smooth bump (1 - (2s)^2)^4 on |s| < 1/2, unnormalized.
double bump(double s);
/// Cutoff: 0 within 3 eps of the boundary, 1 beyond 4 eps, cubic ramp between.
double cutoff(double x, double eps);

struct DefectReport {
  double eps = 0.0;
  double w_l2 = 0.0;
  double grad_w_l2 = 0.0;
  double grad_ratio = 0.0;       // |grad w| / eps^(1/2)
  double layer = 0.0;            // 4 eps + width / 2: beyond it the mollified cutoff is 1
  double grad_w_layer = 0.0;     // |grad w| on Omega_layer
  double grad_w_interior = 0.0;  // |grad w| off Omega_layer
  int mollifier_points = 0;
  double mollifier_mass_defect = 0.0;
  bool resampled = false;
};

/// w = u_eps - u_0 - eps chi(x/eps) S(eta u_0'), S the mollification at
/// width `width` (default eps). d = 1 only; chi is the cell corrector.
DefectReport two_scale_defect(const FieldSolution& u_eps, const FieldSolution& u0, const cell::CellSolution& chi,
                              double eps, double width = 0.0, int mollifier_points = 32);

/// Columns x [y] u at the nodes.
void write_columns(std::ostream& os, const FieldSolution& u);

}  // namespace homoglab::bvp

#endif  // HOMOGLAB_BVP_HPP
