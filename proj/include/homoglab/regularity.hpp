#ifndef HOMOGLAB_REGULARITY_HPP
#define HOMOGLAB_REGULARITY_HPP

#include "homoglab/bvp.hpp"
#include "homoglab/coefficients.hpp"
#include "homoglab/rates.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace homoglab::reg {

/// P(x) = constant + gradient . (x - center) fitted on B_r(center).
struct AffineFit {
  double r = 0.0;
  double constant = 0.0;
  Vec gradient;
  double residual = 0.0;  // (avg_{B_r} |u - P|^2)^{1/2}
  double source = 0.0;    // r (avg_{B_r} |f|^p)^{1/p}
  double H = 0.0;         // residual / r + source
  double h = 0.0;         // |gradient|
  int nodes = 0;
};

/// Least squares over the grid nodes in B_r with trapezoid weights.
/// p <= 0 picks 2d. Throws DomainError if the ball leaves the unit cube and
/// InputError if fewer than min_nodes nodes span the radius.
AffineFit fit_affine(const bvp::FieldSolution& u, const Vec& center, double r, const bvp::ScalarFn& f = {},
                     double p = 0.0, int min_nodes = 4);

/// (avg_{B_r} |u - P|^2)^{1/2} for a given affine P, same weights as fit_affine.
double affine_residual(const bvp::FieldSolution& u, const Vec& center, double r, double constant,
                       const Vec& gradient);

struct RegularityProfile {
  Vec center;
  double p = 0.0;
  std::vector<AffineFit> fits;  // ascending r
};

RegularityProfile profile(const bvp::FieldSolution& u, const Vec& center, std::vector<double> radii,
                          const bvp::ScalarFn& f = {}, double p = 0.0);

/// Dyadic r0 2^-k down to floor, plus the schedule points eps_m in [floor, r0].
std::vector<double> probe_radii(double r0, double floor, const scales::ScaleSchedule* schedule = nullptr);

struct DoublingReport {
  double c_H = 0.0;  // max_{r<=t<=2r} H(t) / H(2r)
  double c_h = 0.0;  // max_{r<=t,s<=2r} |h(t) - h(s)| / H(2r)
  int pairs = 0;     // radii r with 2r also in the profile
};

/// Needs >= 8 radii; 0/0 counts as 0.
DoublingReport doubling_check(const RegularityProfile& prof);

struct LipschitzEntry {
  double parameter = 0.0;
  RegularityProfile profile;
  double sup_ratio = 0.0;  // sup_r (H + h)(r) / (H + h)(r0)
  double floor = 0.0;      // smallest probed radius
  std::string note;
};

struct LipschitzReport {
  std::vector<LipschitzEntry> entries;  // ascending parameter
  double variation = 0.0;               // max / min of sup_ratio over the family
  bool bounded = false;                 // variation <= 2
};

struct LipschitzOptions {
  double center = 0.5;
  double r0 = 0.25;
  int floor_nodes = 16;  // smallest radius spans this many grid panels
  rates::SweepOptions solve;
};

/// d = 1: exact solves of the family with data, profiles at dyadic and
/// scale-aligned radii.
LipschitzReport lipschitz_probe(const rates::Family& family, std::vector<double> params, const rates::Data& data,
                                const LipschitzOptions& opt = {});

struct MmSeries {
  double alpha = 0.0;
  double T = 0.0;
  std::vector<double> first;   // sum_{j<=m} (eps_m/eps_j) R_j
  std::vector<double> second;  // (sum_{j<=m} eps_m/eps_j) sum_{k>=1} k^alpha delta_{k+m}
  std::vector<double> M;       // max of the two
  std::vector<double> tails;   // sum_{m<=l<=horizon} M_l
  std::optional<int> m0;       // first m with T tails[m] <= 1
  bool hypothesis_holds = false;  // sum_{j=1}^m eps_m/eps_j <= 2 up to the horizon
  bool divergent = false;
  bool closed_form = false;
};

/// M_m for m = 0..horizon with alpha = rho/2. closed_form uses geometric
/// sums and needs a geometric schedule and a geometric or finite delta.
MmSeries mm_series(const scales::ScaleSchedule& s, const coeff::DeltaSequence& delta, double rho, double T,
                   int horizon = scales::kDefaultHorizon, bool closed_form = false);

struct DiniReport {
  int samples = 0;
  int levels = 0;
  double rho = 1.0;
  std::vector<double> r;
  std::vector<double> omega;  // sampled sup_{|x1-x2|<r} |A(x1) - A(x2)|
  double C = 0.0;             // omega <= C (r^{1/2} + |log r|^{-1-rho}) on [2^-kmin, 1/2], dyadic brackets
  bool below_overlay = false; // also on the check radii in between
  double integral = 0.0;      // int_0^{1/2} omega(r)/r dr
  double overlay_integral = 0.0;
  bool vartheta_holds = false;
  double vartheta = 0.0;
};

double dini_overlay(double r, double rho);

/// d = 1. omega by sliding-window max/min of the truncated coefficient on
/// `samples` uniform points; fits C on the dyadic brackets down to 2^-kmin
/// and checks the overlay at `per_octave` radii per octave.
DiniReport dini_modulus(const coeff::Hierarchy& h, double vartheta, double rho = 1.0, int kmin = 12,
                        int samples = 1 << 16, int per_octave = 4, double tol = 1e-10);

void write_profile_csv(std::ostream& os, const RegularityProfile& prof);

}  // namespace homoglab::reg

#endif  // HOMOGLAB_REGULARITY_HPP
