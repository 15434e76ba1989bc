#include "config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace homoglab::cli {

ConfigParseError::ConfigParseError(const std::string& msg, int line, int column)
    : ConfigError(line > 0 ? "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg : msg),
      line_(line),
      column_(column) {}

const std::vector<std::string>& kinds() {
  static const std::vector<std::string> k{"rate_sweep",     "tau_sweep",       "lipschitz_probe", "cell_convergence",
                                          "recursion_check", "stability_probe", "mm_series",       "dini"};
  return k;
}

ExperimentConfig defaults_for(const std::string& kind) {
  ExperimentConfig c;
  c.kind = kind;
  c.id = kind;
  if (kind == "rate_sweep") {
    c.values = {0.25, 0.125, 0.0625, 0.03125, 0.015625};
  } else if (kind == "tau_sweep") {
    c.schedule.eps1 = 0.0625;
    c.values = {0.0625, 0.125, 0.25};
    c.checks.slope_min = 0.8;
    c.checks.slope_max = 1.2;
    c.checks.r2_min = 0.0;
    c.checks.predictor_spread = 0.0;
  } else if (kind == "lipschitz_probe") {
    c.values = {0.125, 0.0625, 0.03125, 0.015625};
  } else if (kind == "stability_probe") {
    c.hierarchy.levels = 3;
    c.values = {0.01, 0.05, 0.1};
  } else if (kind == "mm_series") {
    c.schedule.eps1 = 0.5;
    c.delta.prefix = {};
    c.delta.c = 1.0;
    c.delta.tau = 0.25;
  } else if (kind == "dini") {
    c.schedule.eps1 = 0.5;
  }
  return c;
}

namespace {

[[noreturn]] void fail(const std::string& msg, const YAML::Mark& m) {
  if (m.is_null()) throw ConfigParseError(msg, 0, 0);
  throw ConfigParseError(msg, m.line + 1, m.column + 1);
}

void check_keys(const YAML::Node& node, const std::string& section, const std::set<std::string>& allowed) {
  if (!node.IsMap()) fail(section + " must be a table", node.Mark());
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) fail("unknown key '" + key + "' in " + section, kv.first.Mark());
  }
}

template <typename T>
const char* type_name() {
  if constexpr (std::is_same_v<T, int>) return "an integer";
  if constexpr (std::is_same_v<T, double>) return "a number";
  if constexpr (std::is_same_v<T, bool>) return "true or false";
  if constexpr (std::is_same_v<T, std::string>) return "a string";
  return "a list";
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out) {
  const YAML::Node v = node[key];
  if (!v) return;
  try {
    out = v.as<T>();
  } catch (const YAML::BadConversion&) {
    fail(std::string(key) + " must be " + type_name<T>(), v.Mark());
  }
}

void require(bool ok, const std::string& msg, const YAML::Node& node, const char* key) {
  if (ok) return;
  const YAML::Node v = node[key];
  fail(msg, v ? v.Mark() : node.Mark());
}

struct Marks {
  YAML::Mark kind, schedule, hierarchy, delta, sweep, solver;
};

void validate_marked(const ExperimentConfig& cfg, const Marks& marks) {
  const auto& k = cfg.kind;
  auto guard = [](const YAML::Mark& m, auto&& fn) {
    try {
      fn();
    } catch (const ConfigParseError&) {
      throw;
    } catch (const Error& e) {
      fail(e.what(), m);
    }
  };
  guard(marks.schedule, [&] { build_schedule(cfg.schedule); });
  const bool sweeps = k == "rate_sweep" || k == "tau_sweep" || k == "lipschitz_probe" || k == "stability_probe";
  if (sweeps && cfg.values.empty()) fail("sweep.values must not be empty", marks.sweep);
  const bool uses_hierarchy = k != "recursion_check" && k != "mm_series";
  if (uses_hierarchy) {
    const auto& hm = marks.hierarchy.is_null() ? marks.schedule : marks.hierarchy;
    if ((k == "rate_sweep" || k == "lipschitz_probe") && cfg.schedule.type != "geometric") {
      fail(k + " sweeps eps_1 of a geometric schedule", marks.schedule);
    }
    if ((k == "tau_sweep" || k == "lipschitz_probe" || k == "dini") && cfg.hierarchy.dim != 1) {
      fail(k + " is one-dimensional", hm);
    }
    if (k == "tau_sweep" && cfg.hierarchy.family != "weierstrass") fail("tau_sweep needs the weierstrass family", hm);
    guard(hm, [&] {
      if (k == "rate_sweep" || k == "lipschitz_probe") {
        for (double e : cfg.values) build_hierarchy(cfg, e);
      } else if (k == "tau_sweep") {
        for (double t : cfg.values) build_hierarchy(cfg, NAN, t);
      } else {
        build_hierarchy(cfg);
      }
    });
  }
  if (k == "recursion_check" || k == "mm_series") {
    guard(marks.delta.is_null() ? marks.kind : marks.delta, [&] {
      const auto d = build_delta(cfg.delta);
      if (k == "recursion_check" && !d.converges(1.0)) throw ConfigError("recursion_check needs [delta]_1 finite");
    });
  }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    fail(e.msg, e.mark);
  }
  if (!root || !root.IsMap()) throw ConfigParseError("config must be a table of keys", 1, 1);
  check_keys(root, "config",
             {"schema_version", "kind", "id", "schedule", "hierarchy", "delta", "sweep", "solver", "checks", "output"});

  int version = 0;
  if (!root["schema_version"]) fail("missing schema_version", root.Mark());
  read(root, "schema_version", version);
  require(version == kSchemaVersion, "unsupported schema_version (expected 1)", root, "schema_version");

  if (!root["kind"]) fail("missing kind", root.Mark());
  std::string kind;
  read(root, "kind", kind);
  const auto& ks = kinds();
  require(std::find(ks.begin(), ks.end(), kind) != ks.end(), "unknown kind '" + kind + "'", root, "kind");

  ExperimentConfig c = defaults_for(kind);
  Marks marks;
  marks.kind = root["kind"].Mark();
  read(root, "id", c.id);
  read(root, "output", c.output);

  const YAML::Node s = root["schedule"];
  if (!s) fail("missing schedule", root.Mark());
  marks.schedule = s.Mark();
  check_keys(s, "schedule", {"type", "eps1", "prefix", "tail_ratio", "increments", "tail_increment", "horizon"});
  read(s, "type", c.schedule.type);
  require(c.schedule.type == "geometric" || c.schedule.type == "explicit" || c.schedule.type == "power",
          "schedule.type must be geometric, explicit or power", s, "type");
  read(s, "eps1", c.schedule.eps1);
  read(s, "prefix", c.schedule.prefix);
  read(s, "tail_ratio", c.schedule.tail_ratio);
  read(s, "increments", c.schedule.increments);
  read(s, "tail_increment", c.schedule.tail_increment);
  read(s, "horizon", c.schedule.horizon);
  require(c.schedule.horizon >= 1, "schedule.horizon must be >= 1", s, "horizon");

  if (const YAML::Node h = root["hierarchy"]) {
    marks.hierarchy = h.Mark();
    check_keys(h, "hierarchy", {"dim", "family", "mean", "base_amplitude", "amplitude", "tau", "levels"});
    read(h, "dim", c.hierarchy.dim);
    require(c.hierarchy.dim == 1 || c.hierarchy.dim == 2, "hierarchy.dim must be 1 or 2", h, "dim");
    read(h, "family", c.hierarchy.family);
    require(c.hierarchy.family == "base" || c.hierarchy.family == "two_scale" || c.hierarchy.family == "weierstrass",
            "hierarchy.family must be base, two_scale or weierstrass", h, "family");
    read(h, "mean", c.hierarchy.mean);
    read(h, "base_amplitude", c.hierarchy.base_amplitude);
    read(h, "amplitude", c.hierarchy.amplitude);
    read(h, "tau", c.hierarchy.tau);
    read(h, "levels", c.hierarchy.levels);
    require(c.hierarchy.mean > std::abs(c.hierarchy.base_amplitude), "hierarchy.mean must exceed |base_amplitude|", h,
            "mean");
  }

  if (const YAML::Node d = root["delta"]) {
    marks.delta = d.Mark();
    check_keys(d, "delta", {"prefix", "tail", "c", "tau", "p", "shift"});
    read(d, "prefix", c.delta.prefix);
    read(d, "tail", c.delta.tail);
    require(c.delta.tail == "zero" || c.delta.tail == "geometric" || c.delta.tail == "power",
            "delta.tail must be zero, geometric or power", d, "tail");
    read(d, "c", c.delta.c);
    read(d, "tau", c.delta.tau);
    read(d, "p", c.delta.p);
    read(d, "shift", c.delta.shift);
  }

  if (const YAML::Node w = root["sweep"]) {
    marks.sweep = w.Mark();
    check_keys(w, "sweep", {"values"});
    read(w, "values", c.values);
  } else {
    marks.sweep = root.Mark();
  }

  if (const YAML::Node v = root["solver"]) {
    marks.solver = v.Mark();
    check_keys(v, "solver",
               {"panels", "homogenized_panels", "resolve_panels", "truncate", "cell_n", "slow_n", "grid_limit", "grids",
                "rtol", "tol", "c0", "samples", "depth", "level", "rho", "T", "vartheta", "kmin", "dini_samples",
                "center", "r0", "floor_nodes"});
    auto& o = c.solver;
    read(v, "panels", o.panels);
    read(v, "homogenized_panels", o.homogenized_panels);
    read(v, "resolve_panels", o.resolve_panels);
    read(v, "truncate", o.truncate);
    read(v, "cell_n", o.cell_n);
    read(v, "slow_n", o.slow_n);
    read(v, "grid_limit", o.grid_limit);
    read(v, "grids", o.grids);
    read(v, "rtol", o.rtol);
    read(v, "tol", o.tol);
    read(v, "c0", o.c0);
    read(v, "samples", o.samples);
    read(v, "depth", o.depth);
    read(v, "level", o.level);
    read(v, "rho", o.rho);
    read(v, "T", o.T);
    read(v, "vartheta", o.vartheta);
    read(v, "kmin", o.kmin);
    read(v, "dini_samples", o.dini_samples);
    read(v, "center", o.center);
    read(v, "r0", o.r0);
    read(v, "floor_nodes", o.floor_nodes);
    require(o.panels >= 16, "solver.panels must be >= 16", v, "panels");
    require(o.homogenized_panels >= 16, "solver.homogenized_panels must be >= 16", v, "homogenized_panels");
    require(o.truncate >= 0, "solver.truncate must be >= 0", v, "truncate");
    require(o.samples >= 1, "solver.samples must be >= 1", v, "samples");
    require(o.depth >= 0, "solver.depth must be >= 0", v, "depth");
    require(!o.grids.empty(), "solver.grids must not be empty", v, "grids");
    require(!o.c0.empty(), "solver.c0 must not be empty", v, "c0");
    for (double x : o.c0) require(x >= 0.0, "solver.c0 entries must be >= 0", v, "c0");
  }

  if (const YAML::Node k = root["checks"]) {
    check_keys(k, "checks",
               {"enabled", "slope_min", "slope_max", "r2_min", "predictor_spread", "variation_max", "converged_tol",
                "closed_tol", "tail_max", "tail_at"});
    auto& o = c.checks;
    read(k, "enabled", o.enabled);
    read(k, "slope_min", o.slope_min);
    read(k, "slope_max", o.slope_max);
    read(k, "r2_min", o.r2_min);
    read(k, "predictor_spread", o.predictor_spread);
    read(k, "variation_max", o.variation_max);
    read(k, "converged_tol", o.converged_tol);
    read(k, "closed_tol", o.closed_tol);
    read(k, "tail_max", o.tail_max);
    read(k, "tail_at", o.tail_at);
  }

  validate_marked(c, marks);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigParseError("cannot read config " + path, 0, 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void validate(const ExperimentConfig& cfg) { validate_marked(cfg, Marks{}); }

std::string to_yaml(const ExperimentConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  auto seq = [&out](const auto& v) {
    out << YAML::Flow << YAML::BeginSeq;
    for (const auto& x : v) out << x;
    out << YAML::EndSeq;
  };
  out << YAML::BeginMap;
  out << YAML::Key << "schema_version" << YAML::Value << c.schema_version;
  out << YAML::Key << "kind" << YAML::Value << c.kind;
  out << YAML::Key << "id" << YAML::Value << c.id;
  if (!c.output.empty()) out << YAML::Key << "output" << YAML::Value << c.output;

  out << YAML::Key << "schedule" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "type" << YAML::Value << c.schedule.type;
  out << YAML::Key << "eps1" << YAML::Value << c.schedule.eps1;
  out << YAML::Key << "prefix" << YAML::Value;
  seq(c.schedule.prefix);
  out << YAML::Key << "tail_ratio" << YAML::Value << c.schedule.tail_ratio;
  out << YAML::Key << "increments" << YAML::Value;
  seq(c.schedule.increments);
  out << YAML::Key << "tail_increment" << YAML::Value << c.schedule.tail_increment;
  out << YAML::Key << "horizon" << YAML::Value << c.schedule.horizon;
  out << YAML::EndMap;

  const auto& h = c.hierarchy;
  out << YAML::Key << "hierarchy" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "dim" << YAML::Value << h.dim;
  out << YAML::Key << "family" << YAML::Value << h.family;
  out << YAML::Key << "mean" << YAML::Value << h.mean;
  out << YAML::Key << "base_amplitude" << YAML::Value << h.base_amplitude;
  out << YAML::Key << "amplitude" << YAML::Value << h.amplitude;
  out << YAML::Key << "tau" << YAML::Value << h.tau;
  out << YAML::Key << "levels" << YAML::Value << h.levels;
  out << YAML::EndMap;

  const auto& d = c.delta;
  out << YAML::Key << "delta" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "prefix" << YAML::Value;
  seq(d.prefix);
  out << YAML::Key << "tail" << YAML::Value << d.tail;
  out << YAML::Key << "c" << YAML::Value << d.c;
  out << YAML::Key << "tau" << YAML::Value << d.tau;
  out << YAML::Key << "p" << YAML::Value << d.p;
  out << YAML::Key << "shift" << YAML::Value << d.shift;
  out << YAML::EndMap;

  out << YAML::Key << "sweep" << YAML::Value << YAML::BeginMap << YAML::Key << "values" << YAML::Value;
  seq(c.values);
  out << YAML::EndMap;

  const auto& o = c.solver;
  out << YAML::Key << "solver" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "panels" << YAML::Value << o.panels;
  out << YAML::Key << "homogenized_panels" << YAML::Value << o.homogenized_panels;
  out << YAML::Key << "resolve_panels" << YAML::Value << o.resolve_panels;
  out << YAML::Key << "truncate" << YAML::Value << o.truncate;
  out << YAML::Key << "cell_n" << YAML::Value << o.cell_n;
  out << YAML::Key << "slow_n" << YAML::Value << o.slow_n;
  out << YAML::Key << "grid_limit" << YAML::Value << o.grid_limit;
  out << YAML::Key << "grids" << YAML::Value;
  seq(o.grids);
  out << YAML::Key << "rtol" << YAML::Value << o.rtol;
  out << YAML::Key << "tol" << YAML::Value << o.tol;
  out << YAML::Key << "c0" << YAML::Value;
  seq(o.c0);
  out << YAML::Key << "samples" << YAML::Value << o.samples;
  out << YAML::Key << "depth" << YAML::Value << o.depth;
  out << YAML::Key << "level" << YAML::Value << o.level;
  out << YAML::Key << "rho" << YAML::Value << o.rho;
  out << YAML::Key << "T" << YAML::Value << o.T;
  out << YAML::Key << "vartheta" << YAML::Value << o.vartheta;
  out << YAML::Key << "kmin" << YAML::Value << o.kmin;
  out << YAML::Key << "dini_samples" << YAML::Value << o.dini_samples;
  out << YAML::Key << "center" << YAML::Value << o.center;
  out << YAML::Key << "r0" << YAML::Value << o.r0;
  out << YAML::Key << "floor_nodes" << YAML::Value << o.floor_nodes;
  out << YAML::EndMap;

  const auto& k = c.checks;
  out << YAML::Key << "checks" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "enabled" << YAML::Value << k.enabled;
  out << YAML::Key << "slope_min" << YAML::Value << k.slope_min;
  out << YAML::Key << "slope_max" << YAML::Value << k.slope_max;
  out << YAML::Key << "r2_min" << YAML::Value << k.r2_min;
  out << YAML::Key << "predictor_spread" << YAML::Value << k.predictor_spread;
  out << YAML::Key << "variation_max" << YAML::Value << k.variation_max;
  out << YAML::Key << "converged_tol" << YAML::Value << k.converged_tol;
  out << YAML::Key << "closed_tol" << YAML::Value << k.closed_tol;
  out << YAML::Key << "tail_max" << YAML::Value << k.tail_max;
  out << YAML::Key << "tail_at" << YAML::Value << k.tail_at;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string schema_text() {
  return R"(homoglab config schema, version 1 (YAML)

Top level
  schema_version  int     required, must be 1
  kind            string  required: rate_sweep | tau_sweep | lipschitz_probe | cell_convergence |
                          recursion_check | stability_probe | mm_series | dini
  id              string  experiment id (default: kind)
  output          string  default output directory (--out overrides)
  schedule        table   required
  hierarchy       table
  delta           table   recursion_check, mm_series
  sweep           table
  solver          table
  checks          table
Unknown keys anywhere are rejected.

schedule
  type            geometric | explicit | power
  eps1            eps_1 (geometric: eps_j = eps1^j; power: eps_j = eps1^beta_j)
  prefix          explicit: [eps_1, ..., eps_p]
  tail_ratio      explicit: eps_{p+i} = eps_p tail_ratio^i
  increments      power: beta_j - beta_{j-1} for j = 2, 3, ...
  tail_increment  power: increment after the list
  horizon         indices checked by sup/sum conditions (default 64)

hierarchy
  dim             1 or 2
  family          base:        B_0 = mean + base_amplitude sin(2 pi x_1)
                  two_scale:   B_0 + amplitude cos(2 pi y_1)
                  weierstrass: B_0 + sum_k tau^k cos(2 pi y_k) / (2 pi), ratio eps1
  mean, base_amplitude, amplitude, tau
  levels          weierstrass layer count (< 0: infinite)

delta             delta_l = prefix[l], then tail: zero | geometric (c tau^l) | power (c (l + shift)^-p)
  prefix, tail, c, tau, p, shift

sweep
  values          eps_1 list (rate_sweep, lipschitz_probe), tau list (tau_sweep, stability_probe)

solver
  panels              1D quadrature panels for u_eps (65536)
  homogenized_panels  1D panels for u_0 (256)
  resolve_panels      layer k resolved iff panels eps_k >= resolve_panels (16)
  truncate            layers kept in u_eps and u_0 (4, capped by the nesting budget)
  cell_n, slow_n      recursion grid (0: defaults)
  grid_limit          2D: largest N before a sweep point is skipped
  grids               cell_convergence grid sizes
  rtol, tol           cell solver tolerance; coefficient truncation tolerance (dini)
  c0                  list of C_0 values (recursion_check, predictor uses the first)
  samples             stability_probe sample points
  depth               recursion_check n
  level               stability_probe n (< 0: budget)
  rho, T              mm_series exponent rho (alpha = rho/2) and T; dini rho
  vartheta, kmin, dini_samples   dini: eps_j >= vartheta^j check, r down to 2^-kmin, sample count
  center, r0, floor_nodes        lipschitz_probe ball center, top radius, smallest radius in panels

checks            exit status 1 when an enabled check fails
  enabled, slope_min, slope_max, r2_min, predictor_spread (<= 0 disables), variation_max,
  converged_tol, closed_tol, tail_max, tail_at

Output files
  results.csv      columns by kind (below)
  summary.json     id, kind, pass, checks [{name, value, threshold, relation, pass}], metrics, warnings
  resolved_config.yaml  full config with defaults; re-runs to identical results at --threads 1
  schema.txt       this file
  plot.gp          gnuplot script for results.csv

results.csv columns
  rate_sweep, tau_sweep  parameter,error,predictor,empirical_C
      parameter = eps_1 or tau; error = |u_eps - u_0|_L2; predictor = Lambda [delta]_1 sup eps_k/eps_{k-1};
      empirical_C = error / predictor
  lipschitz_probe        parameter,r,H,h,ratio
      H, h = affine-fit quantities on B_r(center); ratio = (H + h)(r) / (H + h)(r0)
  cell_convergence       N,a11,a12,a21,a22,error
      homogenized matrix on an N^d grid; error = max entry distance to the laminate closed form
  recursion_check        c0,k,value,bound,margin
      value = delta_k^n, bound = exp(C0 [delta]_1)(1 + C0 [delta]_0 [delta]_1) R_k^n, margin = bound - value
  stability_probe        tau,certified,measured,bound,ratio
      measured = max |A_hat_1 - A_hat_2| over samples, bound = mu^-4 tau, ratio = measured / tau
  mm_series              m,first,second,M,tail
      M = max(first, second); tail = sum_{m <= l <= horizon} M_l
  dini                   r,omega,overlay
      omega = sampled continuity modulus, overlay = C (r^1/2 + |log r|^(-1-rho))
)";
}

scales::ScaleSchedule build_schedule(const ScheduleSpec& s) {
  if (s.type == "geometric") return scales::ScaleSchedule::geometric(s.eps1, s.horizon);
  if (s.type == "explicit") return scales::ScaleSchedule::explicit_with_tail(s.prefix, s.tail_ratio, s.horizon);
  if (s.type == "power") return scales::ScaleSchedule::power(s.eps1, s.increments, s.tail_increment, s.horizon);
  throw ConfigError("unknown schedule type " + s.type);
}

coeff::DeltaSequence build_delta(const DeltaSpec& d) {
  if (d.tail == "zero") return coeff::DeltaSequence::finite(d.prefix.empty() ? std::vector<double>{0.0} : d.prefix);
  if (d.tail == "geometric") return coeff::DeltaSequence::geometric(d.prefix, d.c, d.tau);
  if (d.tail == "power") return coeff::DeltaSequence::power(d.prefix, d.c, d.p, d.shift);
  throw ConfigError("unknown delta tail " + d.tail);
}

coeff::Hierarchy build_hierarchy(const ExperimentConfig& cfg, double eps1, double tau) {
  using namespace coeff;
  const auto& h = cfg.hierarchy;
  ScheduleSpec sched = cfg.schedule;
  if (!std::isnan(eps1)) sched.eps1 = eps1;
  const int d = h.dim;
  Vec k = Vec::Zero(d);
  k(0) = 1.0;
  const Layer base = Layer::trig(
      0, d, {const_term(h.mean, d), TrigTerm{h.base_amplitude * identity(d), {Factor{0, k, -kPi / 2}}}});
  if (h.family == "base") return Hierarchy(d, build_schedule(sched), {base});
  if (h.family == "two_scale") {
    const Layer fast = Layer::trig(1, d, {TrigTerm{h.amplitude * identity(d), {Factor{1, k, 0.0}}}});
    return Hierarchy(d, build_schedule(sched), {base, fast});
  }
  if (sched.type != "geometric") throw ConfigError("the weierstrass family needs a geometric schedule");
  WeierstrassSpec spec{base, {}, std::isnan(tau) ? h.tau : tau, sched.eps1, h.levels, sched.horizon, std::nullopt, 1.0};
  return weierstrass_builder(spec);
}

}  // namespace homoglab::cli
