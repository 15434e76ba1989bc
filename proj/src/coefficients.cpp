#include "homoglab/coefficients.hpp"

#include <algorithm>
#include <atomic>
#include <climits>
#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

namespace homoglab::coeff {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::atomic<std::uint64_t> next_closure_id{1};

bool is_integer(double v) { return std::abs(v - std::round(v)) <= 1e-12; }

std::string fnv_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace

TrigTerm cos_term(double coef, int var, double k, double phase) {
  TrigTerm t;
  t.coef = Mat::Constant(1, 1, coef);
  t.factors.push_back(Factor{var, make_vec(k), phase});
  return t;
}

TrigTerm const_term(double coef, int dim) { return TrigTerm{coef * identity(dim), {}}; }

// ---------------------------------------------------------------- Layer

Layer Layer::trig(int level, int dim, std::vector<TrigTerm> terms) {
  if (level < 0) throw ValidationError("layer level must be >= 0");
  if (dim < 1 || dim > kMaxDim) throw ValidationError("layer dimension must be 1 or 2");
  for (const auto& t : terms) {
    if (t.coef.rows() != dim || t.coef.cols() != dim) {
      throw ValidationError("trig term coefficient has wrong shape");
    }
    if (!t.coef.allFinite()) throw ValidationError("trig term coefficient is not finite");
    for (const auto& f : t.factors) {
      if (f.var < 0 || f.var > level) {
        std::ostringstream os;
        os << "factor variable y_" << f.var << " not available on level " << level;
        throw ValidationError(os.str());
      }
      if (f.wave.size() != dim) throw ValidationError("factor wave vector has wrong size");
      if (f.var >= 1) {
        for (int i = 0; i < dim; ++i) {
          if (!is_integer(f.wave(i))) {
            throw ValidationError("waves on torus variables must be integers (periodicity)");
          }
        }
      }
    }
  }
  Layer l;
  l.level_ = level;
  l.dim_ = dim;
  l.terms_ = std::move(terms);
  l.certify();
  return l;
}

Layer Layer::closure(int level, int dim, Fn fn, double sup_bound, std::vector<double> lip_bounds,
                     std::string label) {
  if (level < 0) throw ValidationError("layer level must be >= 0");
  if (dim < 1 || dim > kMaxDim) throw ValidationError("layer dimension must be 1 or 2");
  if (!fn) throw ValidationError("closure layer needs a function");
  if (!(sup_bound >= 0.0)) throw ValidationError("closure sup bound must be >= 0");
  lip_bounds.resize(level + 1, 0.0);
  for (double b : lip_bounds) {
    if (!(b >= 0.0)) throw ValidationError("closure Lipschitz bounds must be >= 0");
  }
  Layer l;
  l.level_ = level;
  l.dim_ = dim;
  l.fn_ = std::move(fn);
  l.label_ = std::move(label);
  l.id_ = next_closure_id++;
  l.sup_ = sup_bound;
  l.lip_ = std::move(lip_bounds);
  return l;
}

void Layer::certify() {
  sup_ = 0.0;
  lip_.assign(level_ + 1, 0.0);
  for (const auto& t : terms_) {
    const double c = op_norm(t.coef);
    sup_ += c;
    for (const auto& f : t.factors) lip_[f.var] += c * kTwoPi * f.wave.norm();
  }
}

Mat Layer::eval(const Point& y) const {
  if (static_cast<int>(y.size()) < level_ + 1) {
    throw DomainError("layer evaluation needs y_0..y_level");
  }
  if (fn_) return fn_(y);
  Mat out = Mat::Zero(dim_, dim_);
  for (const auto& t : terms_) {
    double w = 1.0;
    for (const auto& f : t.factors) w *= std::cos(kTwoPi * f.wave.dot(y[f.var]) + f.phase);
    out += w * t.coef;
  }
  return out;
}

double Layer::lip_bound(int var) const {
  if (var < 0 || var > level_) return 0.0;
  return lip_[var];
}

double Layer::delta() const {
  double d = sup_;
  for (double l : lip_) d = std::max(d, l);
  return d;
}

Layer Layer::scaled(double s) const {
  Layer out = *this;
  if (fn_) {
    auto inner = fn_;
    out.fn_ = [inner, s](const Point& y) -> Mat { return s * inner(y); };
    out.id_ = next_closure_id++;
    out.sup_ = std::abs(s) * sup_;
    for (auto& l : out.lip_) l *= std::abs(s);
    return out;
  }
  for (auto& t : out.terms_) t.coef *= s;
  out.certify();
  return out;
}

Layer Layer::relabelled(int level) const {
  if (fn_) {
    Layer out = *this;
    if (level < level_) {
      for (int v = level + 1; v <= level_; ++v) {
        if (lip_[v] > 0.0) throw ValidationError("cannot drop a variable the closure depends on");
      }
    }
    out.level_ = level;
    out.lip_.resize(level + 1, 0.0);
    return out;
  }
  return trig(level, dim_, terms_);
}

std::string Layer::fingerprint() const {
  std::ostringstream os;
  os << std::setprecision(17) << "L" << level_ << "d" << dim_;
  if (fn_) {
    os << "fn:" << label_ << "#" << id_;
    return os.str();
  }
  for (const auto& t : terms_) {
    os << "[";
    for (int i = 0; i < t.coef.size(); ++i) os << t.coef(i) << ",";
    for (const auto& f : t.factors) {
      os << "(" << f.var;
      for (int i = 0; i < f.wave.size(); ++i) os << "," << f.wave(i);
      os << "," << f.phase << ")";
    }
    os << "]";
  }
  return os.str();
}

// ---------------------------------------------------------------- DeltaSequence

namespace {

void check_prefix(const std::vector<double>& prefix) {
  for (double v : prefix) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("delta values must be finite and >= 0");
  }
}

// sum_{l >= a} l^alpha tau^l
double geometric_weighted(double alpha, double tau, int a) {
  if (tau == 0.0) return (a == 0 && alpha == 0.0) ? 1.0 : 0.0;
  const double ta = std::pow(tau, a);
  if (alpha == 0.0) return ta / (1.0 - tau);
  if (alpha == 1.0) return ta * (a * (1.0 - tau) + tau) / ((1.0 - tau) * (1.0 - tau));
  double sum = 0.0;
  const double peak = alpha / std::max(1e-300, -std::log(tau));
  for (long l = a; l < a + 100000000L; ++l) {
    const double term = std::pow(static_cast<double>(l), alpha) * std::pow(tau, static_cast<double>(l));
    sum += term;
    if (l > peak && term <= 1e-18 * sum) break;
  }
  return sum;
}

// sum_{l >= a} l^alpha (l + s)^(-p), Euler-Maclaurin past a direct block.
double power_weighted(double alpha, double p, double s, int a) {
  if (p - alpha <= 1.0) return kInf;
  auto f = [&](double l) { return std::pow(l, alpha) * std::pow(l + s, -p); };
  const long n0 = std::max<long>(a, 20000);
  double sum = 0.0;
  for (long l = a; l < n0; ++l) {
    if (l == 0 && alpha > 0.0) continue;
    sum += f(static_cast<double>(l));
  }
  const double n = static_cast<double>(n0);
  // int_n^inf l^(alpha-p) (1 + s/l)^(-p) dl, binomial series in s/l.
  double integral = 0.0;
  double binom = 1.0;
  for (int j = 0; j < 6; ++j) {
    const double e = p - alpha + j - 1.0;
    integral += binom * std::pow(s, j) * std::pow(n, -e) / e;
    binom *= (-p - j) / (j + 1.0);
  }
  const double fn = f(n);
  const double dfn = fn * (alpha / n - p / (n + s));
  return sum + integral + 0.5 * fn - dfn / 12.0;
}

}  // namespace

DeltaSequence DeltaSequence::finite(std::vector<double> values) {
  check_prefix(values);
  DeltaSequence d;
  d.prefix_ = std::move(values);
  return d;
}

DeltaSequence DeltaSequence::geometric(std::vector<double> prefix, double c, double tau) {
  check_prefix(prefix);
  if (!(c >= 0.0) || !(tau >= 0.0 && tau < 1.0)) {
    throw ValidationError("geometric delta tail needs c >= 0 and tau in [0,1)");
  }
  DeltaSequence d;
  d.prefix_ = std::move(prefix);
  d.tail_ = (c == 0.0 || tau == 0.0) ? Tail::Zero : Tail::Geometric;
  d.c_ = c;
  d.tau_ = tau;
  return d;
}

DeltaSequence DeltaSequence::power(std::vector<double> prefix, double c, double p, double shift) {
  check_prefix(prefix);
  if (!(c >= 0.0) || !(p > 0.0) || !(shift >= 0.0)) {
    throw ValidationError("power delta tail needs c >= 0, p > 0, shift >= 0");
  }
  if (prefix.empty() && shift == 0.0) prefix.push_back(c);
  DeltaSequence d;
  d.prefix_ = std::move(prefix);
  d.tail_ = c == 0.0 ? Tail::Zero : Tail::Power;
  d.c_ = c;
  d.p_ = p;
  d.shift_ = shift;
  return d;
}

double DeltaSequence::operator()(int l) const {
  if (l < 0) return 0.0;
  if (l < prefix_size()) return prefix_[l];
  switch (tail_) {
    case Tail::Zero: return 0.0;
    case Tail::Geometric: return c_ * std::pow(tau_, l);
    case Tail::Power: return c_ * std::pow(l + shift_, -p_);
  }
  return 0.0;
}

bool DeltaSequence::converges(double alpha) const {
  return tail_ != Tail::Power || p_ - alpha > 1.0;
}

double DeltaSequence::weighted_sum(double alpha, int from) const {
  from = std::max(from, 0);
  double sum = 0.0;
  const int p = prefix_size();
  for (int l = from; l < p; ++l) sum += std::pow(static_cast<double>(l), alpha) * prefix_[l];
  const int a = std::max(from, p);
  switch (tail_) {
    case Tail::Zero: break;
    case Tail::Geometric: sum += c_ * geometric_weighted(alpha, tau_, a); break;
    case Tail::Power: sum += c_ * power_weighted(alpha, p_, shift_, a); break;
  }
  return sum;
}

double DeltaSequence::tail_sum(int k) const { return weighted_sum(0.0, k); }

double DeltaSequence::range_sum(int a, int b) const {
  a = std::max(a, 0);
  double sum = 0.0;
  for (int l = a; l <= b; ++l) sum += (*this)(l);
  return sum;
}

DeltaSequence DeltaSequence::shifted(int m, double scale, double head) const {
  if (m < 0) throw DomainError("shift must be >= 0");
  DeltaSequence d;
  d.prefix_.push_back(head);
  for (int l = 1; l + m < prefix_size(); ++l) d.prefix_.push_back(scale * prefix_[l + m]);
  d.tail_ = tail_;
  switch (tail_) {
    case Tail::Zero: break;
    case Tail::Geometric:
      d.c_ = scale * c_ * std::pow(tau_, m);
      d.tau_ = tau_;
      break;
    case Tail::Power:
      d.c_ = scale * c_;
      d.p_ = p_;
      d.shift_ = shift_ + m;
      break;
  }
  check_prefix(d.prefix_);
  return d;
}

DeltaSequence DeltaSequence::truncated(int n) const {
  std::vector<double> v;
  for (int l = 0; l <= n; ++l) v.push_back((*this)(l));
  return finite(std::move(v));
}

DeltaSequence DeltaSequence::dominate(const std::vector<double>& lower) const {
  DeltaSequence d = *this;
  const int n = std::max(prefix_size(), static_cast<int>(lower.size()));
  d.prefix_.resize(n);
  for (int l = 0; l < n; ++l) {
    const double lo = l < static_cast<int>(lower.size()) ? lower[l] : 0.0;
    d.prefix_[l] = std::max((*this)(l), lo);
  }
  return d;
}

std::string DeltaSequence::describe() const {
  std::ostringstream os;
  os << std::setprecision(17) << "prefix[";
  for (std::size_t i = 0; i < prefix_.size(); ++i) os << (i ? "," : "") << prefix_[i];
  os << "]";
  switch (tail_) {
    case Tail::Zero: os << "+zero"; break;
    case Tail::Geometric: os << "+" << c_ << "*" << tau_ << "^l"; break;
    case Tail::Power: os << "+" << c_ << "*(l+" << shift_ << ")^-" << p_; break;
  }
  return os.str();
}

// ---------------------------------------------------------------- Hierarchy

Hierarchy::Hierarchy(int dim, scales::ScaleSchedule schedule, std::vector<Layer> layers,
                     std::optional<DeltaSequence> delta, std::optional<double> mu,
                     Generator generator, double domain_length)
    : dim_(dim), schedule_(std::move(schedule)), generator_(std::move(generator)),
      length_(domain_length) {
  if (dim < 1 || dim > kMaxDim) throw ValidationError("hierarchy dimension must be 1 or 2");
  if (layers.empty()) throw ValidationError("hierarchy needs at least the layer B_0");
  if (!(domain_length > 0.0)) throw ValidationError("domain length must be > 0");
  if (generator_) {
    for (int l = static_cast<int>(layers.size()); l < kStoredGeneratorLayers; ++l) {
      layers.push_back(generator_(l));
    }
  }
  std::vector<double> certified;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].level() != static_cast<int>(l)) {
      throw ValidationError("layer list must be ordered by level starting at 0");
    }
    if (layers[l].dim() != dim) throw ValidationError("layer dimension mismatch");
    certified.push_back(layers[l].delta());
  }
  layers_ = std::make_shared<const std::vector<Layer>>(std::move(layers));

  if (delta) {
    for (std::size_t l = 0; l < certified.size(); ++l) {
      if ((*delta)(static_cast<int>(l)) < certified[l] * (1.0 - 1e-9) - 1e-15) {
        std::ostringstream os;
        os << "declared delta_" << l << " = " << (*delta)(static_cast<int>(l))
           << " is below the certified layer bound " << certified[l];
        throw ValidationError(os.str());
      }
    }
    if (!generator_ && delta->tail_kind() != DeltaSequence::Tail::Zero) {
      delta_ = delta->truncated(depth());
    } else {
      delta_ = *delta;
    }
  } else {
    if (generator_) throw ConfigError("infinite hierarchy needs a delta tail rule");
    delta_ = DeltaSequence::finite(certified);
  }

  if (mu) {
    if (!(*mu > 0.0)) throw ValidationError("mu must be > 0");
    mu_ = *mu;
  } else {
    const auto cert = certified_ellipticity(*this);
    if (!cert) throw ConfigError("mu must be given for hierarchies with closure layers");
    if (!(*cert > 0.0)) {
      throw ValidationError("certified ellipticity bound is not positive; declare mu explicitly");
    }
    const double total = delta_.weighted_sum(0.0, 0);
    mu_ = std::isfinite(total) ? std::min(*cert, 1.0 / total) : *cert;
  }
}

int Hierarchy::depth() const { return generator_ ? INT_MAX : stored_count() - 1; }

bool Hierarchy::bounded() const {
  const double total = delta_.weighted_sum(0.0, 0);
  return std::isfinite(total) && total <= (1.0 / mu_) * (1.0 + 1e-12);
}

Layer Hierarchy::layer(int l) const {
  if (l < 0) throw DomainError("layer index must be >= 0");
  if (l < stored_count()) return (*layers_)[l];
  if (!generator_) throw DomainError("layer index beyond the finite hierarchy");
  return generator_(l);
}

const Layer& Hierarchy::stored_layer(int l) const {
  if (l < 0 || l >= stored_count()) throw DomainError("layer index outside the stored layers");
  return (*layers_)[l];
}

Hierarchy Hierarchy::truncated(int n) const {
  if (n < 0) throw DomainError("truncation level must be >= 0");
  const int last = std::min(n, depth());
  std::vector<Layer> ls;
  for (int l = 0; l <= last; ++l) ls.push_back(layer(l));
  return Hierarchy(dim_, schedule_, std::move(ls), delta_.truncated(last), mu_, {}, length_);
}

Hierarchy Hierarchy::with_schedule(scales::ScaleSchedule schedule) const {
  Hierarchy out = *this;
  out.schedule_ = std::move(schedule);
  return out;
}

void Hierarchy::check_domain(const Vec& y0) const {
  if (y0.size() != dim_) throw DomainError("slow variable has wrong dimension");
  const double tol = 1e-12 * length_;
  for (int i = 0; i < dim_; ++i) {
    if (!(y0(i) >= -tol && y0(i) <= length_ + tol)) {
      std::ostringstream os;
      os << "point outside the domain [0," << length_ << "]^" << dim_;
      throw DomainError(os.str());
    }
  }
}

std::string Hierarchy::fingerprint(int n) const {
  std::ostringstream os;
  os << std::setprecision(17) << "d" << dim_ << "L" << length_ << "n" << n;
  const int last = std::min(n, depth());
  for (int l = 0; l <= last; ++l) os << "|" << layer(l).fingerprint();
  return fnv_hex(os.str());
}

std::optional<double> certified_ellipticity(const Hierarchy& h) {
  const Layer& b0 = h.stored_layer(0);
  if (!b0.is_trig()) return std::nullopt;
  Mat constant = Mat::Zero(h.dim(), h.dim());
  double osc = 0.0;
  for (const auto& t : b0.terms()) {
    if (t.factors.empty()) {
      constant += t.coef;
    } else {
      osc += op_norm(t.coef);
    }
  }
  for (int l = 1; l < h.stored_count(); ++l) osc += h.stored_layer(l).sup_bound();
  if (!h.finite()) osc += h.delta().tail_sum(h.stored_count());
  return min_rayleigh(constant) - osc;
}

Mat eval_partial_sum(const Hierarchy& h, int n, const Point& y) {
  if (n < 0 || n > h.depth()) throw DomainError("partial sum index outside the hierarchy");
  if (static_cast<int>(y.size()) < n + 1) throw DomainError("partial sum needs y_0..y_n");
  h.check_domain(y[0]);
  Mat out = Mat::Zero(h.dim(), h.dim());
  for (int l = 0; l <= n; ++l) {
    if (l < h.stored_count()) {
      out += h.stored_layer(l).eval(y);
    } else {
      out += h.layer(l).eval(y);
    }
  }
  return out;
}

int truncation_level(const Hierarchy& h, double tol, int limit) {
  if (!(tol >= 0.0)) throw ConfigError("truncation tolerance must be >= 0");
  if (!h.delta().converges(0.0)) throw ConfigError("delta tail rule diverges; A^eps is undefined");
  const int last = std::min(h.depth(), limit);
  for (int n = 0; n <= last; ++n) {
    if (n == h.depth()) return n;
    if (h.delta().tail_sum(n + 1) <= tol * (1.0 + 1e-12)) return n;
  }
  std::ostringstream os;
  os << "no truncation level <= " << limit << " reaches tail tolerance " << tol;
  throw BudgetError(os.str());
}

Point multiscale_point(const Hierarchy& h, const Vec& x, int n) {
  Point y;
  y.reserve(n + 1);
  y.push_back(x);
  for (int j = 1; j <= n; ++j) {
    Vec v = x / h.schedule().epsilon(j);
    for (int i = 0; i < v.size(); ++i) v(i) -= std::floor(v(i));
    y.push_back(v);
  }
  return y;
}

MultiscaleValue eval_multiscale(const Hierarchy& h, const Vec& x, double tol) {
  MultiscaleValue out;
  out.n = truncation_level(h, tol);
  out.tail = out.n >= h.depth() ? 0.0 : h.delta().tail_sum(out.n + 1);
  out.value = eval_partial_sum(h, out.n, multiscale_point(h, x, out.n));
  return out;
}

// ---------------------------------------------------------------- delta_norm

DeltaSummary delta_norm(const DeltaSequence& delta, double alpha, std::vector<double> c0_values,
                        int horizon) {
  if (!(alpha >= 0.0)) throw DomainError("alpha must be >= 0");
  DeltaSummary s;
  s.alpha = alpha;
  s.horizon = horizon;
  s.value = delta.weighted_sum(alpha, 1);
  s.divergent = !std::isfinite(s.value);
  s.total = delta.weighted_sum(0.0, 0);
  s.delta1 = delta.weighted_sum(1.0, 1);
  s.c0_values = std::move(c0_values);
  for (double c0 : s.c0_values) {
    const double l0 = std::exp(c0 * s.delta1) * (1.0 + c0 * s.total * s.delta1);
    s.lambda0.push_back(l0);
    s.lambda.push_back(l0 + s.total);
  }
  for (int k = 0; k <= horizon; ++k) s.tails.push_back(delta.tail_sum(k));
  double mid = 0.0;
  double lower = 0.0;
  for (int k = 1; k <= horizon; ++k) {
    mid += std::pow(static_cast<double>(k), alpha) * s.tails[k];
    lower += std::pow(static_cast<double>(k), alpha + 1.0) * delta(k);
  }
  s.sandwich_mid = mid;
  s.sandwich_lower = lower / (alpha + 1.0);
  s.sandwich_upper = delta.weighted_sum(alpha + 1.0, 1);
  const bool lower_ok = s.sandwich_lower <= mid * (1.0 + 1e-12) + 1e-300;
  const bool upper_ok = !std::isfinite(s.sandwich_upper) || mid <= s.sandwich_upper * (1.0 + 1e-12);
  s.sandwich_pass = lower_ok && upper_ok;
  return s;
}

DeltaSummary delta_norm(const Hierarchy& h, double alpha, std::vector<double> c0_values) {
  return delta_norm(h.delta(), alpha, std::move(c0_values), h.schedule().horizon());
}

// ---------------------------------------------------------------- probes

EllipticityReport ellipticity_probe(const Hierarchy& h, int samples, std::uint64_t seed, int nmax) {
  if (samples < 1) throw DomainError("ellipticity_probe needs samples >= 1");
  nmax = std::max(0, std::min(nmax, h.depth()));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> level(0, nmax);
  EllipticityReport r;
  r.samples = samples;
  r.min_quotient = kInf;
  const int d = h.dim();
  for (int s = 0; s < samples; ++s) {
    const int n = level(rng);
    Point y;
    for (int j = 0; j <= n; ++j) {
      Vec v(d);
      for (int i = 0; i < d; ++i) v(i) = unit(rng) * (j == 0 ? h.domain_length() : 1.0);
      y.push_back(v);
    }
    const Mat a = eval_partial_sum(h, n, y);
    const Mat sym = 0.5 * (a + a.transpose());
    Vec dir(d);
    double q;
    if (d == 1) {
      dir << 1.0;
      q = a(0, 0);
    } else {
      Eigen::SelfAdjointEigenSolver<Mat> es(sym);
      q = es.eigenvalues()(0);
      dir = es.eigenvectors().col(0);
    }
    r.max_norm = std::max(r.max_norm, op_norm(a));
    if (q < r.min_quotient) {
      r.min_quotient = q;
      r.witness = y;
      r.witness_n = n;
      r.witness_direction = dir;
    }
  }
  r.pass = r.min_quotient >= h.mu() * (1.0 - 1e-9);
  r.bound_pass = r.max_norm <= (1.0 / h.mu()) * (1.0 + 1e-9);
  return r;
}

// ---------------------------------------------------------------- builders

std::vector<TrigTerm> unit_generator(int dim) {
  TrigTerm t;
  t.coef = identity(dim) / kTwoPi;
  Vec k = Vec::Zero(dim);
  k(0) = 1.0;
  t.factors.push_back(Factor{1, k, 0.0});
  return {t};
}

namespace {

Layer generator_layer(const std::vector<TrigTerm>& g, int k, double scale, int dim) {
  std::vector<TrigTerm> terms = g;
  for (auto& t : terms) {
    t.coef *= scale;
    for (auto& f : t.factors) f.var = k;
  }
  return Layer::trig(k, dim, std::move(terms));
}

}  // namespace

Hierarchy weierstrass_builder(const WeierstrassSpec& spec) {
  if (!(spec.tau > 0.0 && spec.tau <= 0.5)) throw ValidationError("tau must lie in (0, 1/2]");
  if (!(spec.ratio > 0.0 && spec.ratio < 1.0)) throw ValidationError("ratio must lie in (0,1)");
  if (spec.base.level() != 0) throw ValidationError("Weierstrass base must be a level-0 layer");
  const int dim = spec.base.dim();
  auto gens = spec.generators.empty() ? std::vector<std::vector<TrigTerm>>{unit_generator(dim)}
                                      : spec.generators;
  double c = 0.0;
  for (const auto& g : gens) {
    for (const auto& t : g) {
      for (const auto& f : t.factors) {
        if (f.var != 1) throw ValidationError("generator factors must use the variable y_1");
      }
    }
    c = std::max(c, Layer::trig(1, dim, g).delta());
  }
  auto schedule = scales::ScaleSchedule::geometric(spec.ratio, spec.horizon);
  auto delta = DeltaSequence::geometric({spec.base.delta()}, c, spec.tau);
  const double tau = spec.tau;
  auto make = [gens, tau, dim](int k) {
    return generator_layer(gens[(k - 1) % gens.size()], k, std::pow(tau, k), dim);
  };
  std::vector<Layer> layers{spec.base};
  if (spec.levels >= 0) {
    for (int k = 1; k <= spec.levels; ++k) layers.push_back(make(k));
    return Hierarchy(dim, schedule, std::move(layers), delta.truncated(spec.levels), spec.mu, {},
                     spec.domain_length);
  }
  return Hierarchy(dim, schedule, std::move(layers), delta, spec.mu, make, spec.domain_length);
}

namespace {

// B_l(eps_m x, eps_m x/eps_1, ..., eps_m x/eps_m, y~_1, ...) as a layer of level max(l - m, 0).
Layer collapse(const Layer& b, int m, const std::vector<double>& r) {
  const int level = std::max(b.level() - m, 0);
  if (b.is_trig()) {
    std::vector<TrigTerm> terms = b.terms();
    for (auto& t : terms) {
      for (auto& f : t.factors) {
        if (f.var <= m) {
          f.wave *= r[f.var];
          f.var = 0;
        } else {
          f.var -= m;
        }
      }
    }
    return Layer::trig(level, b.dim(), std::move(terms));
  }
  const int orig_level = b.level();
  auto fn = [b, m, r, orig_level](const Point& yt) -> Mat {
    Point y(orig_level + 1);
    for (int v = 0; v <= orig_level; ++v) {
      y[v] = v <= m ? Vec(yt[0] * r[v]) : yt[v - m];
    }
    return b.eval(y);
  };
  std::vector<double> lip(level + 1, 0.0);
  for (int v = 0; v <= orig_level; ++v) {
    if (v <= m) {
      lip[0] += r[v] * b.lip_bound(v);
    } else {
      lip[v - m] = b.lip_bound(v);
    }
  }
  return Layer::closure(level, b.dim(), fn, b.sup_bound(), lip, "rescaled");
}

Layer sum_level0(const std::vector<Layer>& parts, int dim) {
  bool all_trig = true;
  for (const auto& p : parts) all_trig = all_trig && p.is_trig();
  if (all_trig) {
    std::vector<TrigTerm> terms;
    for (const auto& p : parts) terms.insert(terms.end(), p.terms().begin(), p.terms().end());
    return Layer::trig(0, dim, std::move(terms));
  }
  double sup = 0.0;
  double lip = 0.0;
  for (const auto& p : parts) {
    sup += p.sup_bound();
    lip += p.lip_bound(0);
  }
  auto fn = [parts, dim](const Point& y) -> Mat {
    Mat out = Mat::Zero(dim, dim);
    for (const auto& p : parts) out += p.eval(y);
    return out;
  };
  return Layer::closure(0, dim, fn, sup, {lip}, "collapsed");
}

}  // namespace

Hierarchy rescale_hierarchy(const Hierarchy& h, int m) {
  if (m < 0) throw DomainError("rescale index must be >= 0");
  if (m == 0) return h;
  const auto& s = h.schedule();
  const double em = s.epsilon(m);
  std::vector<double> r(m + 1);
  double sm = 0.0;
  for (int j = 0; j <= m; ++j) {
    r[j] = em / s.epsilon(j);
    sm += r[j];
  }
  const int top = std::min(m, h.depth());
  std::vector<Layer> slow;
  for (int l = 0; l <= top; ++l) slow.push_back(collapse(h.layer(l), m, r));
  std::vector<Layer> layers{sum_level0(slow, h.dim())};
  const double head = sm * h.delta().range_sum(0, m);
  auto delta = h.delta().shifted(m, sm, head);
  const double length = h.domain_length() / em;
  if (h.finite()) {
    for (int l = m + 1; l <= h.depth(); ++l) layers.push_back(collapse(h.layer(l), m, r));
    return Hierarchy(h.dim(), s.rescale(m), std::move(layers), delta, h.mu(), {}, length);
  }
  auto gen = [h, m, r](int l) { return collapse(h.layer(l + m), m, r); };
  return Hierarchy(h.dim(), s.rescale(m), std::move(layers), delta, h.mu(), gen, length);
}

}  // namespace homoglab::coeff
