#ifndef HOMOGLAB_CORE_HPP
#define HOMOGLAB_CORE_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace homoglab {

// Spatial dimension is a runtime value in {1, 2}. Fixed maximum sizes keep
// the small vectors and matrices on the stack.
constexpr int kMaxDim = 2;

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, 0, kMaxDim, 1>;

using Mat = MatrixT<double>;
using Vec = VectorT<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A schedule, hierarchy or sequence breaks one of its structural invariants.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A point lies outside the domain on which an object is defined.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or unsupported configuration of an operation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a precondition (ellipticity, shapes, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// An iterative or direct solver failed.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// The requested nesting depth exceeds the configured recursion budget.
class BudgetError : public Error {
 public:
  using Error::Error;
};

inline Vec make_vec(double x) {
  Vec v(1);
  v << x;
  return v;
}

inline Vec make_vec(double x, double y) {
  Vec v(2);
  v << x, y;
  return v;
}

inline Mat identity(int dim) { return Mat::Identity(dim, dim); }

/// Operator 2-norm of a small matrix.
inline double op_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() == 1) return std::abs(m(0, 0));
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

/// Smallest value of xi . A xi over unit xi, i.e. lambda_min of sym(A).
inline double min_rayleigh(const Mat& a) {
  if (a.rows() == 1) return a(0, 0);
  const Mat sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

}  // namespace homoglab

#endif  // HOMOGLAB_CORE_HPP
