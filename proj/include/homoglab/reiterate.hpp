#ifndef HOMOGLAB_REITERATE_HPP
#define HOMOGLAB_REITERATE_HPP

#include "homoglab/cell.hpp"
#include "homoglab/coefficients.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <vector>

namespace homoglab::reit {

using coeff::Hierarchy;
using coeff::Point;

/// Largest n evaluated by nested cell solves (4 in d = 1, 2 in d = 2).
int default_budget(int dim);

struct EvaluatorOptions {
  int cell_n = 0;   // torus nodes per axis; 0 picks 16 (d = 1) or 8 (d = 2)
  int slow_n = 0;   // table nodes per axis of y_0; 0 picks 256 (d = 1) or 8 (d = 2)
  int budget = -1;  // < 0 picks default_budget(d)
  cell::CellOptions cell;
  unsigned threads = 1;
};

/// Intermediate matrices A_n^k(y_0, ..., y_k) of the backward recursion
///   A_n^n = A_n,   A_n^k(y_0..y_k) = homogenization of A_n^{k+1}(y_0..y_k, .) in y_{k+1}.
///
/// eval() runs the nested cell solves at the given point, with the inner
/// torus variables on the cell nodes. interpolate() reads tables of
/// D_k = A_n^k - A_k sampled on a grid (slow_n nodes over [0, L] per axis of
/// y_0, cell_n nodes per torus axis) and adds multilinear interpolation of
/// D_k to the exact A_k.
class IntermediateEvaluator {
 public:
  IntermediateEvaluator(const Hierarchy& h, int n, EvaluatorOptions opt = {});

  int n() const { return n_; }
  int dim() const { return dim_; }
  double mu() const { return mu_; }
  const Hierarchy& hierarchy() const { return h_; }
  const EvaluatorOptions& options() const { return opt_; }

  /// A_n^k at y = (y_0, ..., y_k). k = n returns eval_partial_sum unchanged.
  Mat eval(int k, const Point& y) const;
  /// B_k^n = A_n^k - A_{k-1} (A_{-1} = 0).
  Mat tail_matrix(int k, const Point& y) const;

  Mat interpolate(int k, const Point& y) const;
  void build_tables() const;
  bool has_tables() const;
  /// max |interpolate - eval| over random points (seeded).
  double table_error(int k, int samples, std::uint64_t seed = 1) const;

  /// Persisted tables: header then one sorted record per node.
  void save(const std::string& path) const;
  /// Loads tables written for the same hierarchy and options; false on mismatch.
  bool load(const std::string& path) const;

  std::size_t cache_size() const;

 private:
  Mat level_value(int j, Point& y, const Mat& acc) const;
  std::size_t table_size(int k) const;
  Point table_point(int k, std::size_t index) const;
  std::string header() const;

  Hierarchy h_;
  int n_;
  int dim_;
  double mu_;
  EvaluatorOptions opt_;
  std::vector<coeff::Layer> layers_;

  struct Cache {
    std::shared_mutex mutex;
    std::map<std::vector<double>, Mat> points;
    std::vector<std::vector<double>> tables;  // tables[k]: d*d doubles per node
  };
  std::shared_ptr<Cache> cache_;
};

struct TruncationReport {
  int n = 0;
  double tail = 0.0;       // sum_{k > n} delta_k
  double constant = 0.0;   // mu^-4
  double bound = 0.0;      // constant * tail
};

struct HomogenizedMatrix {
  Mat value;
  TruncationReport truncation;
};

/// Stability constant beta / alpha with alpha = mu, beta = mu^-3.
inline double stability_constant(double mu) { return std::pow(mu, -4.0); }

/// Smallest n with mu^-4 R_{n+1} <= tol; BudgetError past the nesting budget.
TruncationReport choose_truncation(const Hierarchy& h, double tol, int budget = -1);

/// A_n^0(x) with n from choose_truncation.
HomogenizedMatrix homogenized_matrix(const Hierarchy& h, double tol, const Vec& x,
                                     const EvaluatorOptions& opt = {});

struct BknReport {
  int n = 0;
  int k = 0;
  int samples = 0;
  double sup_norm = 0.0;         // sampled max |B_k^n|
  double delta_sum = 0.0;        // sum_{l=k}^n delta_l
  double ratio = 0.0;
  double refined_ratio = 0.0;    // same points, cell_n doubled
  double identity_defect = 0.0;  // max |B_k^n - (B_k + <B_{k+1}^n (I + grad chi)>)|
  bool flagged = false;          // ratio grows by more than 2x under refinement
};

BknReport bkn_norm_probe(const Hierarchy& h, int n, int k, int samples, std::uint64_t seed = 1,
                         const EvaluatorOptions& opt = {});

template <typename Scalar>
struct DeltaRecursionState {
  int n = 0;
  Scalar c0 = 0;
  std::vector<Scalar> values;  // delta_k^n, k = 0..n
  std::vector<Scalar> bound;   // exp(C0 [d]_1)(1 + C0 [d]_0 [d]_1) R_k^n
  std::vector<Scalar> tails;   // R_k^n
  Scalar factor = 0;
  bool overflow = false;
  bool pass = false;  // values <= bound (1 + 4 eps) everywhere
};

/// Runs the delta_k^n recursion as an equality and the closed bound from
/// delta_0..delta_n with the given [d]_0 (total) and [d]_1 (weighted).
template <typename Scalar>
DeltaRecursionState<Scalar> delta_recursion(const std::vector<Scalar>& delta, int n, Scalar c0, Scalar total,
                                            Scalar weighted) {
  if (n < 0 || n >= static_cast<int>(delta.size())) throw InputError("delta_recursion needs n < delta.size()");
  if (!(c0 >= 0)) throw InputError("C0 must be nonnegative");
  for (int l = 0; l <= n; ++l) {
    if (!(delta[l] >= 0)) throw InputError("delta entries must be nonnegative");
  }
  DeltaRecursionState<Scalar> st;
  st.n = n;
  st.c0 = c0;
  st.values.assign(n + 1, 0);
  st.bound.assign(n + 1, 0);
  st.tails.assign(n + 2, 0);
  for (int k = n; k >= 0; --k) st.tails[k] = st.tails[k + 1] + delta[k];
  st.tails.resize(n + 1);
  st.values[n] = delta[n];
  for (int k = n - 1; k >= 0; --k) {
    const Scalar r = st.tails[k + 1];
    st.values[k] = delta[k] + st.values[k + 1] + c0 * r * st.values[k + 1] + c0 * total * r * r;
  }
  using std::exp;
  using std::isfinite;
  st.factor = exp(c0 * weighted) * (1 + c0 * total * weighted);
  const Scalar slack = 1 + 4 * std::numeric_limits<Scalar>::epsilon();
  st.pass = true;
  for (int k = 0; k <= n; ++k) {
    st.bound[k] = st.factor * st.tails[k];
    if (!isfinite(st.values[k]) || !isfinite(st.bound[k])) st.overflow = true;
    if (!(st.values[k] <= st.bound[k] * slack)) st.pass = false;
  }
  if (st.overflow) st.pass = false;
  return st;
}

/// Same with [d]_0 and [d]_1 taken over every entry of delta.
template <typename Scalar>
DeltaRecursionState<Scalar> delta_recursion(const std::vector<Scalar>& delta, int n, Scalar c0) {
  Scalar total = 0, weighted = 0;
  for (std::size_t l = 0; l < delta.size(); ++l) {
    total += delta[l];
    weighted += static_cast<Scalar>(l) * delta[l];
  }
  return delta_recursion(delta, n, c0, total, weighted);
}

DeltaRecursionState<double> delta_recursion(const coeff::DeltaSequence& delta, int n, double c0);

struct StabilityReport {
  double tau = 0.0;
  double certified = 0.0;  // sum of certified sup bounds of the layer differences
  bool tau_valid = false;  // certified <= tau
  double mu = 0.0;
  double bound = 0.0;      // mu^-4 tau
  double measured = 0.0;   // sampled max |A_hat_1 - A_hat_2|
  double ratio = 0.0;      // measured / tau
  int n = 0;
  int samples = 0;
  bool pass = false;
};

/// Compares the homogenized matrices of two hierarchies on the same
/// schedule at sample points of the domain (levels 0..n, n < 0 picks the
/// largest budget-admissible level).
StabilityReport stability_probe(const Hierarchy& h1, const Hierarchy& h2, double tau, int samples = 100,
                                int n = -1, const EvaluatorOptions& opt = {}, std::uint64_t seed = 7);

}  // namespace homoglab::reit

#endif  // HOMOGLAB_REITERATE_HPP
