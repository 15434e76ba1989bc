#include "homoglab/reiterate.hpp"

#include "homoglab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <random>
#include <sstream>

namespace homoglab::reit {

int default_budget(int dim) { return dim == 1 ? 4 : 2; }

namespace {

std::size_t ipow(std::size_t b, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

double frac(double v) { return v - std::floor(v); }

Vec torus_node(int dim, int n, std::size_t t) {
  if (dim == 1) return make_vec(static_cast<double>(t) / n);
  return make_vec(static_cast<double>(t % n) / n, static_cast<double>(t / n) / n);
}

}  // namespace

IntermediateEvaluator::IntermediateEvaluator(const Hierarchy& h, int n, EvaluatorOptions opt)
    : h_(h), n_(n), dim_(h.dim()), mu_(h.mu()), opt_(opt), cache_(std::make_shared<Cache>()) {
  if (opt_.cell_n <= 0) opt_.cell_n = dim_ == 1 ? 16 : 8;
  if (opt_.slow_n <= 0) opt_.slow_n = dim_ == 1 ? 256 : 8;
  if (opt_.budget < 0) opt_.budget = default_budget(dim_);
  if (opt_.slow_n < 2) throw ConfigError("slow_n must be at least 2");
  if (n < 0 || n > h.depth()) throw InputError("recursion level outside the hierarchy");
  if (n > opt_.budget) {
    std::ostringstream os;
    os << "nested recursion with n = " << n << " exceeds the budget " << opt_.budget;
    throw BudgetError(os.str());
  }
  // validates cell_n up front
  cell::TorusField probe(dim_, opt_.cell_n);
  for (int l = 0; l <= n; ++l) layers_.push_back(h.layer(l));
}

Mat IntermediateEvaluator::level_value(int j, Point& y, const Mat& acc) const {
  if (j == n_) return acc;
  const int nodes = static_cast<int>(ipow(opt_.cell_n, dim_));
  cell::MatrixField f;
  f.dim = dim_;
  f.n = opt_.cell_n;
  f.values.resize(nodes);
  y.emplace_back();
  for (int t = 0; t < nodes; ++t) {
    y.back() = torus_node(dim_, opt_.cell_n, t);
    const Mat next = acc + layers_[j + 1].eval(y);
    f.values[t] = level_value(j + 1, y, next);
  }
  y.pop_back();
  return cell::homogenize(f, mu_, opt_.cell);
}

Mat IntermediateEvaluator::eval(int k, const Point& y) const {
  if (k < 0 || k > n_) throw InputError("intermediate level outside 0..n");
  if (static_cast<int>(y.size()) != k + 1) throw InputError("intermediate_eval needs y_0..y_k");
  if (k == n_) return coeff::eval_partial_sum(h_, n_, y);
  h_.check_domain(y[0]);

  std::vector<double> key{static_cast<double>(k)};
  for (const auto& v : y) key.insert(key.end(), v.data(), v.data() + v.size());
  {
    std::shared_lock lock(cache_->mutex);
    auto it = cache_->points.find(key);
    if (it != cache_->points.end()) return it->second;
  }
  Point work = y;
  const Mat value = level_value(k, work, coeff::eval_partial_sum(h_, k, y));
  std::unique_lock lock(cache_->mutex);
  cache_->points.emplace(std::move(key), value);
  return value;
}

Mat IntermediateEvaluator::tail_matrix(int k, const Point& y) const {
  Mat out = eval(k, y);
  if (k > 0) out -= coeff::eval_partial_sum(h_, k - 1, y);
  return out;
}

std::size_t IntermediateEvaluator::cache_size() const {
  std::shared_lock lock(cache_->mutex);
  return cache_->points.size();
}

// ---------------------------------------------------------------- tables

std::size_t IntermediateEvaluator::table_size(int k) const {
  return ipow(opt_.slow_n, dim_) * ipow(ipow(opt_.cell_n, dim_), k);
}

Point IntermediateEvaluator::table_point(int k, std::size_t index) const {
  const std::size_t s0 = ipow(opt_.slow_n, dim_);
  const std::size_t t = ipow(opt_.cell_n, dim_);
  const double h = h_.domain_length() / (opt_.slow_n - 1);
  Point y;
  const std::size_t i0 = index % s0;
  if (dim_ == 1) {
    y.push_back(make_vec(h * i0));
  } else {
    y.push_back(make_vec(h * (i0 % opt_.slow_n), h * (i0 / opt_.slow_n)));
  }
  std::size_t rest = index / s0;
  for (int j = 1; j <= k; ++j) {
    y.push_back(torus_node(dim_, opt_.cell_n, rest % t));
    rest /= t;
  }
  return y;
}

bool IntermediateEvaluator::has_tables() const {
  std::shared_lock lock(cache_->mutex);
  return static_cast<int>(cache_->tables.size()) == n_ + 1;
}

void IntermediateEvaluator::build_tables() const {
  if (has_tables()) return;
  const int dd = dim_ * dim_;
  const std::size_t s0 = ipow(opt_.slow_n, dim_);
  const std::size_t t = ipow(opt_.cell_n, dim_);
  std::vector<std::vector<double>> tables(n_ + 1);
  tables[n_].assign(table_size(n_) * dd, 0.0);
  for (int k = n_ - 1; k >= 0; --k) {
    const std::size_t count = table_size(k);
    tables[k].assign(count * dd, 0.0);
    const std::size_t stride = s0 * ipow(t, k);
    const auto& upper = tables[k + 1];
    parallel_for(count, opt_.threads, [&](std::size_t idx) {
      Point y = table_point(k, idx);
      const Mat ak = coeff::eval_partial_sum(h_, k, y);
      cell::MatrixField f;
      f.dim = dim_;
      f.n = opt_.cell_n;
      f.values.resize(t);
      y.emplace_back();
      for (std::size_t node = 0; node < t; ++node) {
        y.back() = torus_node(dim_, opt_.cell_n, node);
        Mat m = ak + layers_[k + 1].eval(y);
        const double* d = &upper[(idx + stride * node) * dd];
        for (int e = 0; e < dd; ++e) m(e % dim_, e / dim_) += d[e];
        f.values[node] = m;
      }
      const Mat dk = cell::homogenize(f, mu_, opt_.cell) - ak;
      for (int e = 0; e < dd; ++e) tables[k][idx * dd + e] = dk(e % dim_, e / dim_);
    });
  }
  tables[n_].clear();
  std::unique_lock lock(cache_->mutex);
  cache_->tables = std::move(tables);
}

Mat IntermediateEvaluator::interpolate(int k, const Point& y) const {
  if (k < 0 || k > n_) throw InputError("intermediate level outside 0..n");
  if (static_cast<int>(y.size()) != k + 1) throw InputError("interpolate needs y_0..y_k");
  const Mat ak = coeff::eval_partial_sum(h_, k, y);
  if (k == n_) return ak;
  build_tables();
  std::shared_lock lock(cache_->mutex);
  const auto& table = cache_->tables[k];

  // Axis list: y_0 components (clamped grid) then torus components (periodic).
  const int axes = dim_ * (k + 1);
  std::vector<std::size_t> lo(axes), hi(axes), stride(axes);
  std::vector<double> w(axes);
  const double h = h_.domain_length() / (opt_.slow_n - 1);
  std::size_t s = 1;
  for (int a = 0; a < axes; ++a) {
    const int var = a / dim_;
    const int comp = a % dim_;
    if (var == 0) {
      const double u = y[0](comp) / h;
      const int i = std::clamp(static_cast<int>(std::floor(u)), 0, opt_.slow_n - 2);
      lo[a] = i;
      hi[a] = i + 1;
      w[a] = std::clamp(u - i, 0.0, 1.0);
      stride[a] = s;
      s *= opt_.slow_n;
    } else {
      const double u = frac(y[var](comp)) * opt_.cell_n;
      int i = static_cast<int>(std::floor(u));
      if (i >= opt_.cell_n) i = opt_.cell_n - 1;
      lo[a] = i;
      hi[a] = (i + 1) % opt_.cell_n;
      w[a] = u - i;
      stride[a] = s;
      s *= opt_.cell_n;
    }
  }
  const int dd = dim_ * dim_;
  Mat out = ak;
  for (std::size_t corner = 0; corner < (std::size_t{1} << axes); ++corner) {
    double weight = 1.0;
    std::size_t idx = 0;
    for (int a = 0; a < axes; ++a) {
      const bool up = (corner >> a) & 1;
      weight *= up ? w[a] : 1.0 - w[a];
      idx += stride[a] * (up ? hi[a] : lo[a]);
    }
    if (weight == 0.0) continue;
    for (int e = 0; e < dd; ++e) out(e % dim_, e / dim_) += weight * table[idx * dd + e];
  }
  return out;
}

double IntermediateEvaluator::table_error(int k, int samples, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double err = 0.0;
  for (int s = 0; s < samples; ++s) {
    Point y;
    for (int j = 0; j <= k; ++j) {
      const double scale = j == 0 ? h_.domain_length() : 1.0;
      y.push_back(dim_ == 1 ? make_vec(scale * u(rng)) : make_vec(scale * u(rng), scale * u(rng)));
    }
    err = std::max(err, op_norm(interpolate(k, y) - eval(k, y)));
  }
  return err;
}

std::string IntermediateEvaluator::header() const {
  std::ostringstream os;
  os << std::setprecision(17) << "homoglab-tables 1 d " << dim_ << " n " << n_ << " M " << opt_.slow_n
     << " N " << opt_.cell_n << " rtol " << opt_.cell.rtol << " hierarchy " << h_.fingerprint(n_);
  return os.str();
}

void IntermediateEvaluator::save(const std::string& path) const {
  build_tables();
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write cache file " + path);
  std::shared_lock lock(cache_->mutex);
  out << header() << "\n" << std::setprecision(17);
  const int dd = dim_ * dim_;
  for (int k = 0; k < n_; ++k) {
    const auto& table = cache_->tables[k];
    const std::size_t count = table.size() / dd;
    out << "level " << k << " " << count << "\n";
    for (std::size_t i = 0; i < count; ++i) {
      out << i;
      for (int e = 0; e < dd; ++e) out << " " << table[i * dd + e];
      out << "\n";
    }
  }
}

bool IntermediateEvaluator::load(const std::string& path) const {
  std::ifstream in(path);
  if (!in) return false;
  std::string line;
  if (!std::getline(in, line) || line != header()) return false;
  const int dd = dim_ * dim_;
  std::vector<std::vector<double>> tables(n_ + 1);
  for (int k = 0; k < n_; ++k) {
    std::string word;
    int level = -1;
    std::size_t count = 0;
    if (!(in >> word >> level >> count) || word != "level" || level != k || count != table_size(k)) return false;
    tables[k].resize(count * dd);
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t index = 0;
      if (!(in >> index) || index != i) return false;
      for (int e = 0; e < dd; ++e) {
        if (!(in >> tables[k][i * dd + e])) return false;
      }
    }
  }
  std::unique_lock lock(cache_->mutex);
  cache_->tables = std::move(tables);
  return true;
}

// ---------------------------------------------------------------- truncation

TruncationReport choose_truncation(const Hierarchy& h, double tol, int budget) {
  if (!(tol > 0.0)) throw ConfigError("truncation tolerance must be positive");
  if (!h.delta().converges(0.0)) throw ConfigError("delta tail rule diverges; the homogenized matrix is undefined");
  if (budget < 0) budget = default_budget(h.dim());
  TruncationReport r;
  r.constant = stability_constant(h.mu());
  const int last = std::min(h.depth(), budget);
  for (int n = 0; n <= last; ++n) {
    const double tail = n >= h.depth() ? 0.0 : h.delta().tail_sum(n + 1);
    if (r.constant * tail <= tol) {
      r.n = n;
      r.tail = tail;
      r.bound = r.constant * tail;
      return r;
    }
  }
  std::ostringstream os;
  os << "certifying |A_hat_n - A_hat| <= " << tol << " needs more than " << budget
     << " nested levels (mu^-4 R_" << budget + 1 << " = "
     << r.constant * h.delta().tail_sum(budget + 1) << "); use a larger tolerance";
  throw BudgetError(os.str());
}

HomogenizedMatrix homogenized_matrix(const Hierarchy& h, double tol, const Vec& x, const EvaluatorOptions& opt) {
  HomogenizedMatrix out;
  out.truncation = choose_truncation(h, tol, opt.budget);
  IntermediateEvaluator ev(h, out.truncation.n, opt);
  out.value = ev.eval(0, {x});
  return out;
}

// ---------------------------------------------------------------- probes

namespace {

Point random_point(const Hierarchy& h, int k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Point y;
  for (int j = 0; j <= k; ++j) {
    const double scale = j == 0 ? h.domain_length() : 1.0;
    y.push_back(h.dim() == 1 ? make_vec(scale * u(rng)) : make_vec(scale * u(rng), scale * u(rng)));
  }
  return y;
}

}  // namespace

BknReport bkn_norm_probe(const Hierarchy& h, int n, int k, int samples, std::uint64_t seed,
                         const EvaluatorOptions& opt) {
  if (k < 0 || k > n) throw InputError("bkn_norm_probe needs 0 <= k <= n");
  IntermediateEvaluator ev(h, n, opt);
  EvaluatorOptions fine_opt = ev.options();
  fine_opt.cell_n *= 2;
  IntermediateEvaluator fine(h, n, fine_opt);
  const int d = h.dim();

  BknReport r;
  r.n = n;
  r.k = k;
  r.samples = samples;
  r.delta_sum = h.delta().range_sum(k, n);
  double fine_sup = 0.0;
  std::mt19937_64 rng(seed);
  for (int s = 0; s < samples; ++s) {
    Point y = random_point(h, k, rng);
    const Mat b = ev.tail_matrix(k, y);
    r.sup_norm = std::max(r.sup_norm, op_norm(b));
    fine_sup = std::max(fine_sup, op_norm(fine.tail_matrix(k, y)));
    if (k == n) continue;

    // B_k + <B_{k+1}^n (I + grad chi)> with chi the corrector of A_n^{k+1}(y, .)
    const int nodes = static_cast<int>(ipow(ev.options().cell_n, d));
    cell::MatrixField f;
    f.dim = d;
    f.n = ev.options().cell_n;
    Point z = y;
    z.emplace_back();
    for (int t = 0; t < nodes; ++t) {
      z.back() = torus_node(d, f.n, t);
      f.values.push_back(ev.eval(k + 1, z));
    }
    const auto sol = cell::solve_corrector(f, ev.mu(), ev.options().cell);
    const Mat ak = coeff::eval_partial_sum(h, k, y);
    Mat form = ak;
    if (k > 0) form -= coeff::eval_partial_sum(h, k - 1, y);
    for (int t = 0; t < nodes; ++t) {
      const Mat upper = f.values[t] - ak;
      Mat grad = Mat::Identity(d, d);
      for (int l = 0; l < d; ++l) {
        for (int j = 0; j < d; ++j) grad(l, j) += sol.grad_chi[j][l][t];
      }
      form += upper * grad / static_cast<double>(nodes);
    }
    r.identity_defect = std::max(r.identity_defect, op_norm(form - b));
  }
  r.ratio = r.delta_sum > 0.0 ? r.sup_norm / r.delta_sum : (r.sup_norm > 0.0 ? INFINITY : 0.0);
  r.refined_ratio = r.delta_sum > 0.0 ? fine_sup / r.delta_sum : (fine_sup > 0.0 ? INFINITY : 0.0);
  r.flagged = r.refined_ratio > 2.0 * r.ratio + 1e-12;
  return r;
}

DeltaRecursionState<double> delta_recursion(const coeff::DeltaSequence& delta, int n, double c0) {
  if (!delta.converges(1.0)) throw InputError("delta_recursion needs a finite [delta]_1");
  std::vector<double> values(n + 1);
  for (int l = 0; l <= n; ++l) values[l] = delta(l);
  return delta_recursion(values, n, c0, delta.weighted_sum(0.0, 0), delta.weighted_sum(1.0));
}

namespace {

bool same_factors(const std::vector<coeff::Factor>& a, const std::vector<coeff::Factor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].var != b[i].var || a[i].phase != b[i].phase || a[i].wave != b[i].wave) return false;
  }
  return true;
}

// Certified sup bound of B1 - B2: identical factor lists are merged.
double difference_bound(const coeff::Layer& b1, const coeff::Layer& b2) {
  if (!b1.is_trig() || !b2.is_trig()) return b1.sup_bound() + b2.sup_bound();
  std::vector<coeff::TrigTerm> merged = b1.terms();
  for (const auto& t : b2.terms()) {
    auto it = std::find_if(merged.begin(), merged.end(),
                           [&](const coeff::TrigTerm& m) { return same_factors(m.factors, t.factors); });
    if (it != merged.end()) {
      it->coef -= t.coef;
    } else {
      merged.push_back({-t.coef, t.factors});
    }
  }
  double s = 0.0;
  for (const auto& t : merged) s += op_norm(t.coef);
  return s;
}

}  // namespace

StabilityReport stability_probe(const Hierarchy& h1, const Hierarchy& h2, double tau, int samples, int n,
                                const EvaluatorOptions& opt, std::uint64_t seed) {
  if (h1.dim() != h2.dim() || h1.domain_length() != h2.domain_length() ||
      h1.schedule().describe() != h2.schedule().describe()) {
    throw InputError("stability_probe needs hierarchies on the same schedule and domain");
  }
  if (!(tau >= 0.0)) throw InputError("tau must be nonnegative");
  const int budget = opt.budget < 0 ? default_budget(h1.dim()) : opt.budget;
  if (n < 0) n = std::min({h1.depth(), h2.depth(), budget});
  StabilityReport r;
  r.tau = tau;
  r.n = n;
  r.samples = samples;
  for (int l = 0; l <= n; ++l) r.certified += difference_bound(h1.layer(l), h2.layer(l));
  const auto tail = [&](const Hierarchy& h) { return n >= h.depth() ? 0.0 : h.delta().tail_sum(n + 1); };
  r.certified += tail(h1) + tail(h2);
  r.tau_valid = r.certified <= tau * (1.0 + 1e-12) + 1e-15;
  r.mu = std::min(h1.mu(), h2.mu());
  r.bound = stability_constant(r.mu) * tau;

  IntermediateEvaluator e1(h1, n, opt), e2(h2, n, opt);
  std::mt19937_64 rng(seed);
  for (int s = 0; s < samples; ++s) {
    const Point y = random_point(h1, 0, rng);
    r.measured = std::max(r.measured, op_norm(e1.eval(0, y) - e2.eval(0, y)));
  }
  r.ratio = tau > 0.0 ? r.measured / tau : 0.0;
  r.pass = r.tau_valid && r.measured <= r.bound;
  return r;
}

}  // namespace homoglab::reit
