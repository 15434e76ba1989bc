#include "homoglab/scales.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace homoglab::scales {

double ScaleSchedule::Base::eps(int j) const {
  if (j <= 0) return 1.0;
  const int p = static_cast<int>(prefix.size());
  if (j <= p) return prefix[j - 1];
  const double last = p == 0 ? 1.0 : prefix[p - 1];
  return last * std::pow(tail_ratio, j - p);
}

ScaleSchedule::ScaleSchedule(Kind kind, std::shared_ptr<const Base> base, int offset, int horizon)
    : kind_(kind), base_(std::move(base)), offset_(offset), horizon_(horizon) {
  if (horizon_ < 1) throw ValidationError("schedule horizon must be >= 1");
}

namespace {

void validate_sequence(const std::vector<double>& prefix, double tail_ratio) {
  if (!(tail_ratio > 0.0 && tail_ratio < 1.0)) {
    throw ValidationError("schedule tail ratio must lie in (0,1)");
  }
  double prev = 1.0;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    const double e = prefix[i];
    if (!(e > 0.0 && e < prev)) {
      std::ostringstream os;
      os << "schedule not strictly decreasing in (0,1) at index " << (i + 1) << " (eps = " << e
         << ", previous = " << prev << ")";
      throw ValidationError(os.str());
    }
    prev = e;
  }
}

}  // namespace

ScaleSchedule ScaleSchedule::geometric(double eps1, int horizon) {
  validate_sequence({}, eps1);
  auto base = std::make_shared<Base>();
  base->tail_ratio = eps1;
  return ScaleSchedule(Kind::Geometric, std::move(base), 0, horizon);
}

ScaleSchedule ScaleSchedule::explicit_with_tail(std::vector<double> prefix, double tail_ratio,
                                                int horizon) {
  validate_sequence(prefix, tail_ratio);
  auto base = std::make_shared<Base>();
  base->prefix = std::move(prefix);
  base->tail_ratio = tail_ratio;
  return ScaleSchedule(Kind::Explicit, std::move(base), 0, horizon);
}

ScaleSchedule ScaleSchedule::power(double eps1, std::vector<double> increments,
                                   double tail_increment, int horizon) {
  if (!(eps1 > 0.0 && eps1 < 1.0)) throw ValidationError("power schedule needs eps1 in (0,1)");
  if (!(tail_increment > 0.0)) throw ValidationError("power schedule increments must be > 0");
  std::vector<double> prefix{eps1};
  double beta = 1.0;
  for (double inc : increments) {
    if (!(inc > 0.0)) throw ValidationError("power schedule increments must be > 0");
    beta += inc;
    prefix.push_back(std::pow(eps1, beta));
  }
  const double tail = std::pow(eps1, tail_increment);
  validate_sequence(prefix, tail);
  auto base = std::make_shared<Base>();
  base->prefix = std::move(prefix);
  base->tail_ratio = tail;
  return ScaleSchedule(Kind::Power, std::move(base), 0, horizon);
}

ScaleSchedule ScaleSchedule::with_horizon(int horizon) const {
  return ScaleSchedule(kind_, base_, offset_, horizon);
}

double ScaleSchedule::epsilon(int j) const {
  if (j < 0) throw DomainError("schedule index must be >= 0");
  if (j == 0) return 1.0;
  if (offset_ == 0) return base_->eps(j);
  return base_->eps(j + offset_) / base_->eps(offset_);
}

int ScaleSchedule::first_tail_index() const {
  const int p = static_cast<int>(base_->prefix.size());
  return std::max(1, p - offset_ + 1);
}

double ScaleSchedule::ratio(int k) const {
  if (k < 1) throw DomainError("ratio index must be >= 1");
  if (k >= first_tail_index()) return base_->tail_ratio;
  return base_->eps(k + offset_) / base_->eps(k + offset_ - 1);
}

ScaleSchedule ScaleSchedule::rescale(int m) const {
  if (m < 0) throw DomainError("rescale index must be >= 0");
  return ScaleSchedule(kind_, base_, offset_ + m, horizon_);
}

std::string ScaleSchedule::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case Kind::Geometric: os << "geometric"; break;
    case Kind::Explicit: os << "explicit"; break;
    case Kind::Power: os << "power"; break;
  }
  os << "(prefix=" << base_->prefix.size() << ", tail_ratio=" << base_->tail_ratio
     << ", offset=" << offset_ << ", horizon=" << horizon_ << ")";
  return os.str();
}

double separation_sup(const ScaleSchedule& s, int kmax) {
  if (kmax < 1) throw DomainError("separation_sup needs kmax >= 1");
  double sup = 0.0;
  const int last = std::min(kmax, s.first_tail_index());
  for (int k = 1; k <= last; ++k) {
    const double r = s.ratio(k);
    if (!(r < 1.0)) throw ValidationError("non-decreasing schedule detected");
    sup = std::max(sup, r);
  }
  return sup;
}

double sum_ratio(const ScaleSchedule& s, int m) {
  if (m < 1) throw DomainError("sum_ratio needs m >= 1");
  const double em = s.epsilon(m);
  double sum = 0.0;
  for (int j = 1; j <= m; ++j) sum += em / s.epsilon(j);
  return sum;
}

DecayBoundReport decay_bound_check(const ScaleSchedule& s, double K, int mmax) {
  if (!(K > 1.0 && K <= 2.0)) throw DomainError("decay_bound_check needs K in (1,2]");
  if (mmax < 1) throw DomainError("decay_bound_check needs mmax >= 1");
  DecayBoundReport report;
  report.K = K;
  report.horizon = mmax;
  report.hypothesis_holds = true;
  for (int m = 1; m <= mmax; ++m) {
    const double sr = sum_ratio(s, m);
    report.worst_sum_ratio = std::max(report.worst_sum_ratio, sr);
    if (sr > K + kBoundaryTol) {
      report.hypothesis_holds = false;
      report.hypothesis_failure_m = m;
      return report;
    }
  }
  const double q = 1.0 - 1.0 / K;
  report.all_pass = true;
  report.pairs.reserve(static_cast<std::size_t>(mmax) * (mmax + 1) / 2);
  for (int m = 1; m <= mmax; ++m) {
    const double em = s.epsilon(m);
    for (int k = 1; k <= m; ++k) {
      DecayPair pair;
      pair.k = k;
      pair.m = m;
      pair.ratio = em / s.epsilon(k);
      pair.bound = K * std::pow(q, m - k);
      pair.pass = pair.ratio <= pair.bound + kBoundaryTol;
      report.all_pass = report.all_pass && pair.pass;
      report.pairs.push_back(pair);
    }
  }
  return report;
}

SeparationReport power_separation_check(const ScaleSchedule& s, double N, int kmax,
                                        bool two_sided) {
  if (!(N >= 1.0)) throw DomainError("power_separation_check needs N >= 1");
  SeparationReport report;
  report.checked_up_to = kmax;
  report.worst_margin = std::numeric_limits<double>::infinity();
  // rho_j = eps_{j+1}/eps_j = ratio(j+1)
  for (int k = 1; k <= kmax; ++k) {
    const double rk = s.ratio(k + 1);
    for (int i = 0; i < k; ++i) {
      const double ri = s.ratio(i + 1);
      double margin = ri - std::pow(rk, N);
      if (two_sided) margin = std::min(margin, std::pow(rk, 1.0 / N) - ri);
      report.worst_margin = std::min(report.worst_margin, margin);
      if (margin < -kBoundaryTol && report.pass) {
        report.pass = false;
        report.first_violation = std::make_pair(k, i);
      }
    }
  }
  return report;
}

LogSeparationReport log_separation_check(const ScaleSchedule& s, int m, double c0,
                                         double exponent) {
  if (!(c0 > 0.0 && c0 <= 1.0)) throw DomainError("log_separation_check needs c0 in (0,1]");
  if (!(exponent > 0.0)) throw DomainError("log_separation_check needs exponent > 0");
  if (m < 0) throw DomainError("log_separation_check needs m >= 0");
  const double r = s.ratio(m + 1);
  if (!(r < 1.0)) throw ValidationError("eps_{m+1}/eps_m = 1: log separation undefined");
  const double rhs = c0 / std::abs(std::log(r));
  LogSeparationReport report;
  report.horizon = s.horizon();
  report.worst_margin = std::numeric_limits<double>::infinity();
  // Past the tail index every ratio is the same, so one tail sample suffices.
  const int last = std::max(m + 2, std::min(s.horizon(), s.first_tail_index() + 1));
  for (int k = m + 2; k <= last; ++k) {
    const double margin = rhs - std::pow(s.ratio(k), exponent);
    if (margin < report.worst_margin) {
      report.worst_margin = margin;
      report.worst_k = k;
    }
  }
  report.pass = report.worst_margin >= -kBoundaryTol;
  return report;
}

}  // namespace homoglab::scales
