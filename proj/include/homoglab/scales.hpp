#ifndef HOMOGLAB_SCALES_HPP
#define HOMOGLAB_SCALES_HPP

#include "homoglab/core.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace homoglab::scales {

constexpr int kDefaultHorizon = 64;
/// Absolute slack used when comparing ratios at the boundary of a condition.
constexpr double kBoundaryTol = 1e-12;

/// The decreasing scale sequence 1 = eps_0 > eps_1 > eps_2 > ... -> 0.
///
/// Every generator is a finite explicit prefix followed by a constant tail
/// ratio, so suprema and tail conditions over all indices are decidable.
/// A rescaled schedule shares the underlying sequence and divides by
/// eps_m, which makes rescale(rescale(s, a), b) == rescale(s, a + b) exact.
class ScaleSchedule {
 public:
  enum class Kind { Explicit, Geometric, Power };

  /// eps_j = eps1^j.
  static ScaleSchedule geometric(double eps1, int horizon = kDefaultHorizon);
  /// eps_1..eps_p given; eps_{p+i} = eps_p * tail_ratio^i.
  static ScaleSchedule explicit_with_tail(std::vector<double> prefix, double tail_ratio,
                                          int horizon = kDefaultHorizon);
  /// eps_j = eps1^{beta_j}, beta_1 = 1, beta_j - beta_{j-1} = increments[j-2]
  /// for the listed increments and tail_increment afterwards.
  static ScaleSchedule power(double eps1, std::vector<double> increments, double tail_increment,
                             int horizon = kDefaultHorizon);

  Kind kind() const { return kind_; }
  int horizon() const { return horizon_; }
  ScaleSchedule with_horizon(int horizon) const;

  /// eps_j for j >= 0, eps_0 = 1 exactly.
  double epsilon(int j) const;
  /// eps_k / eps_{k-1} for k >= 1; the exact tail ratio in the tail.
  double ratio(int k) const;
  /// Constant ratio reached from index first_tail_index() onwards.
  double tail_ratio() const { return base_->tail_ratio; }
  /// Smallest k such that ratio(k') == tail_ratio() for every k' >= k.
  int first_tail_index() const;

  /// eps~_j = eps_{j+m} / eps_m.
  ScaleSchedule rescale(int m) const;
  int offset() const { return offset_; }

  std::string describe() const;

 private:
  struct Base {
    std::vector<double> prefix;  // eps_1..eps_p
    double tail_ratio = 0.5;
    double eps(int j) const;
  };
  ScaleSchedule(Kind kind, std::shared_ptr<const Base> base, int offset, int horizon);

  Kind kind_;
  std::shared_ptr<const Base> base_;
  int offset_ = 0;
  int horizon_ = kDefaultHorizon;
};

/// sup_{1<=k<=kmax} eps_k/eps_{k-1}; exact over all k once kmax reaches the tail.
double separation_sup(const ScaleSchedule& s, int kmax);

/// sum_{j=1}^m eps_m/eps_j.
double sum_ratio(const ScaleSchedule& s, int m);

struct DecayPair {
  int k = 0;
  int m = 0;
  double ratio = 0.0;  // eps_m / eps_k
  double bound = 0.0;  // K (1 - 1/K)^{m-k}
  bool pass = false;
};

struct DecayBoundReport {
  double K = 0.0;
  int horizon = 0;
  bool hypothesis_holds = false;
  std::optional<int> hypothesis_failure_m;  // first m with sum_ratio > K
  double worst_sum_ratio = 0.0;
  std::vector<DecayPair> pairs;  // empty when the hypothesis fails
  bool all_pass = false;
};

/// Checks sum_ratio(s, m) <= K for m <= mmax and, when that holds, the
/// exponential decay eps_m/eps_k <= K (1 - 1/K)^{m-k} for all 1 <= k <= m <= mmax.
DecayBoundReport decay_bound_check(const ScaleSchedule& s, double K, int mmax);

struct SeparationReport {
  bool pass = true;
  int checked_up_to = 0;
  std::optional<std::pair<int, int>> first_violation;  // (k, i)
  double worst_margin = 0.0;
};

/// (eps_{k+1}/eps_k)^N <= eps_{i+1}/eps_i for kmax >= k > i >= 0; with
/// two_sided also eps_{i+1}/eps_i <= (eps_{k+1}/eps_k)^{1/N}.
SeparationReport power_separation_check(const ScaleSchedule& s, double N, int kmax,
                                        bool two_sided = false);

struct LogSeparationReport {
  bool pass = true;
  double worst_margin = 0.0;  // min over k of rhs - lhs
  int worst_k = 0;
  int horizon = 0;
};

/// (eps_k/eps_{k-1})^exponent <= c0 |log(eps_{m+1}/eps_m)|^{-1} for k >= m + 2.
LogSeparationReport log_separation_check(const ScaleSchedule& s, int m, double c0,
                                         double exponent);

/// Free-function form of ScaleSchedule::rescale.
inline ScaleSchedule rescale(const ScaleSchedule& s, int m) { return s.rescale(m); }

}  // namespace homoglab::scales

#endif  // HOMOGLAB_SCALES_HPP
