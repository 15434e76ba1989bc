#ifndef HOMOGLAB_COEFFICIENTS_HPP
#define HOMOGLAB_COEFFICIENTS_HPP

#include "homoglab/core.hpp"
#include "homoglab/scales.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace homoglab::coeff {

/// Arguments (y_0, y_1, ..., y_k) of a layer or partial sum; y_0 is the slow
/// variable in the domain, y_j (j >= 1) live on the unit torus.
using Point = std::vector<Vec>;

/// One factor cos(2 pi wave . y_var + phase). Waves on torus variables must
/// be integer vectors; waves on y_0 may be arbitrary.
struct Factor {
  int var = 0;
  Vec wave;
  double phase = 0.0;
};

/// coef * prod(factors); an empty factor list is a constant term.
struct TrigTerm {
  Mat coef;
  std::vector<Factor> factors;
};

/// Single-variable helper: coef * cos(2 pi k y_var + phase) in d = 1.
TrigTerm cos_term(double coef, int var, double k, double phase = 0.0);
/// Constant term coef * I_d.
TrigTerm const_term(double coef, int dim);

/// A layer B_l(y_0, ..., y_l) with certified bounds.
class Layer {
 public:
  using Fn = std::function<Mat(const Point&)>;

  static Layer trig(int level, int dim, std::vector<TrigTerm> terms);
  /// Closure layers carry declared bounds; lip_bounds[j] bounds grad_{y_j}.
  static Layer closure(int level, int dim, Fn fn, double sup_bound, std::vector<double> lip_bounds,
                       std::string label = "closure");

  int level() const { return level_; }
  int dim() const { return dim_; }
  bool is_trig() const { return !fn_; }
  const std::vector<TrigTerm>& terms() const { return terms_; }

  /// Uses y[0..level]; y must hold at least level + 1 entries.
  Mat eval(const Point& y) const;

  double sup_bound() const { return sup_; }
  double lip_bound(int var) const;
  /// max(sup bound, Lipschitz bounds): the smallest admissible delta_l.
  double delta() const;

  /// s * B_l with bounds scaled by |s|.
  Layer scaled(double s) const;
  /// Same matrices relabelled to a different level (variables unchanged).
  Layer relabelled(int level) const;

  std::string fingerprint() const;

 private:
  Layer() = default;
  void certify();

  int level_ = 0;
  int dim_ = 1;
  std::vector<TrigTerm> terms_;
  Fn fn_;
  std::string label_;
  std::uint64_t id_ = 0;
  double sup_ = 0.0;
  std::vector<double> lip_;  // per variable 0..level
};

/// delta_l = prefix[l] for l < prefix.size(), then a closed-form tail.
class DeltaSequence {
 public:
  enum class Tail { Zero, Geometric, Power };

  /// Finite list, zero afterwards.
  static DeltaSequence finite(std::vector<double> values);
  /// prefix, then c * tau^l for l >= prefix.size().
  static DeltaSequence geometric(std::vector<double> prefix, double c, double tau);
  /// prefix, then c * (l + shift)^(-p) for l >= prefix.size().
  static DeltaSequence power(std::vector<double> prefix, double c, double p, double shift = 0.0);

  Tail tail_kind() const { return tail_; }
  int prefix_size() const { return static_cast<int>(prefix_.size()); }
  const std::vector<double>& prefix() const { return prefix_; }
  double tail_c() const { return c_; }
  double tail_tau() const { return tau_; }
  double tail_p() const { return p_; }

  double operator()(int l) const;

  /// sum_{l >= from} l^alpha delta_l (0^0 = 1); +inf when divergent.
  double weighted_sum(double alpha, int from = 1) const;
  bool converges(double alpha) const;
  /// R_k = sum_{l >= k} delta_l.
  double tail_sum(int k) const;
  /// sum_{l=a}^b delta_l.
  double range_sum(int a, int b) const;

  /// l -> scale * delta_{l+m} for l >= 1 with delta~_0 = head.
  DeltaSequence shifted(int m, double scale, double head) const;
  /// Zero past index n.
  DeltaSequence truncated(int n) const;
  /// Pointwise maximum with explicit values on the prefix.
  DeltaSequence dominate(const std::vector<double>& lower) const;

  std::string describe() const;

 private:
  std::vector<double> prefix_;
  Tail tail_ = Tail::Zero;
  double c_ = 0.0;
  double tau_ = 0.0;
  double p_ = 0.0;
  double shift_ = 0.0;
};

/// Number of generator layers stored explicitly in infinite hierarchies.
constexpr int kStoredGeneratorLayers = 48;

/// A = sum_l B_l(x, x/eps_1, ..., x/eps_l) on [0, L]^d.
class Hierarchy {
 public:
  using Generator = std::function<Layer(int level)>;

  /// layers[l] must have level l. With a generator, levels beyond the
  /// explicit list come from it (infinite hierarchy). mu defaults to
  /// min(certified ellipticity lower bound, 1 / sum delta_l).
  Hierarchy(int dim, scales::ScaleSchedule schedule, std::vector<Layer> layers,
            std::optional<DeltaSequence> delta = std::nullopt, std::optional<double> mu = std::nullopt,
            Generator generator = {}, double domain_length = 1.0);

  int dim() const { return dim_; }
  const scales::ScaleSchedule& schedule() const { return schedule_; }
  const DeltaSequence& delta() const { return delta_; }
  double mu() const { return mu_; }
  double domain_length() const { return length_; }
  bool finite() const { return !generator_; }
  /// Index of the last layer; infinite hierarchies report INT_MAX.
  int depth() const;
  /// sum_l delta_l <= 1/mu; reported, not enforced.
  bool bounded() const;
  /// Layer l; materialized on demand past the stored prefix.
  Layer layer(int l) const;
  const Layer& stored_layer(int l) const;
  int stored_count() const { return static_cast<int>(layers_->size()); }

  /// Finite hierarchy with layers 0..n and delta truncated after n.
  Hierarchy truncated(int n) const;
  Hierarchy with_schedule(scales::ScaleSchedule schedule) const;

  /// Checks y_0 in [0, L]^d (tolerance 1e-12 L).
  void check_domain(const Vec& y0) const;

  std::string fingerprint(int n) const;

 private:
  int dim_;
  scales::ScaleSchedule schedule_;
  std::shared_ptr<const std::vector<Layer>> layers_;
  DeltaSequence delta_;
  double mu_ = 0.0;
  Generator generator_;
  double length_ = 1.0;
};

/// Lower bound for xi . A_n xi certified from trig tables: lambda_min of the
/// symmetric constant part of B_0 minus the oscillating mass of every layer.
std::optional<double> certified_ellipticity(const Hierarchy& h);

/// A_n(y_0, ..., y_n) = sum_{l <= n} B_l.
Mat eval_partial_sum(const Hierarchy& h, int n, const Point& y);

struct MultiscaleValue {
  Mat value;
  int n = 0;          // truncation level used
  double tail = 0.0;  // sum_{l > n} delta_l
};

/// Smallest n with R_{n+1} <= tol; throws ConfigError when the tail diverges
/// and BudgetError when no such n <= limit exists.
int truncation_level(const Hierarchy& h, double tol, int limit = 4096);

/// A^eps(x) truncated so that the neglected tail is <= tol.
MultiscaleValue eval_multiscale(const Hierarchy& h, const Vec& x, double tol);
/// Fast variables y_j = frac(x / eps_j) for j <= n.
Point multiscale_point(const Hierarchy& h, const Vec& x, int n);

struct DeltaSummary {
  double alpha = 0.0;
  double value = 0.0;  // sum_{l>=1} l^alpha delta_l
  bool divergent = false;
  double total = 0.0;   // sum_{l>=0} delta_l
  double delta1 = 0.0;  // sum_{l>=1} l delta_l
  std::vector<double> c0_values;
  std::vector<double> lambda0;  // exp(C0 [d]_1)(1 + C0 [d]_0 [d]_1), per C0
  std::vector<double> lambda;   // lambda0 + [d]_0
  std::vector<double> tails;    // R_k, k = 0..horizon
  int horizon = 0;
  // c_alpha [d]_{alpha+1} <= sum_{k=1}^H k^alpha R_k <= C_alpha [d]_{alpha+1}
  double sandwich_lower = 0.0;
  double sandwich_mid = 0.0;
  double sandwich_upper = 0.0;
  bool sandwich_pass = false;
};

DeltaSummary delta_norm(const DeltaSequence& delta, double alpha,
                        std::vector<double> c0_values = {1.0, 10.0},
                        int horizon = scales::kDefaultHorizon);
DeltaSummary delta_norm(const Hierarchy& h, double alpha,
                        std::vector<double> c0_values = {1.0, 10.0});

struct EllipticityReport {
  double min_quotient = 0.0;
  double max_norm = 0.0;  // sampled |A_n xi| / |xi|
  bool pass = false;
  bool bound_pass = false;  // max_norm <= 1/mu
  int witness_n = 0;
  Point witness;
  Vec witness_direction;
  int samples = 0;
};

/// Samples A_n for n = 0..nmax at random points; pass iff every Rayleigh
/// quotient is >= mu (1 - 1e-9).
EllipticityReport ellipticity_probe(const Hierarchy& h, int samples, std::uint64_t seed = 1,
                                    int nmax = 6);

struct WeierstrassSpec {
  Layer base;                          // B_0(y_0)
  std::vector<std::vector<TrigTerm>> generators;  // factors on var 1; cycled over k
  double tau = 0.25;
  double ratio = 0.5;
  int levels = -1;  // < 0: infinite
  int horizon = scales::kDefaultHorizon;
  std::optional<double> mu;
  double domain_length = 1.0;
};

/// Default unit generator G(y) = cos(2 pi y) / (2 pi) * I.
std::vector<TrigTerm> unit_generator(int dim);

/// B_0(x) + sum_k tau^k G_k(x / ratio^k) with delta_k = C tau^k, C the
/// certified bound of the generators.
Hierarchy weierstrass_builder(const WeierstrassSpec& spec);

/// Zoomed hierarchy at scale eps_m on [0, L/eps_m].
Hierarchy rescale_hierarchy(const Hierarchy& h, int m);

}  // namespace homoglab::coeff

#endif  // HOMOGLAB_COEFFICIENTS_HPP
