// experiment.hpp
//
// File-driven runs: a JSON config describes the problem, grid, solver and the
// diagnostics to measure; run() writes a field snapshot, report.json,
// diagnostics.csv, profiles.csv and manifest.json into the output directory.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "apl/core.hpp"
#include "apl/energy.hpp"
#include "apl/expression.hpp"
#include "apl/geometry.hpp"
#include "apl/inequalities.hpp"
#include "apl/phases.hpp"
#include "apl/scalelab.hpp"
#include "apl/solver.hpp"

namespace apl {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kCsvContract = "apl-csv/1";

using json = nlohmann::json;

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

inline double get_number(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
  if (!j.at(key).is_number()) throw ConfigError(where + "." + key + ": expected a number");
  return j.at(key).get<double>();
}

inline double number_or(const json& j, const std::string& key, double fallback, const std::string& where) {
  return j.contains(key) ? get_number(j, key, where) : fallback;
}

inline std::vector<double> number_list(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of numbers");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw ConfigError(where + ": expected an array of numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace detail

// Where a diagnostic is centered: explicit coordinates, or the node of a
// classified set nearest to `near` (default: domain center), zero-phase nodes
// first.
struct CenterSpec {
  std::string kind = "point";  // point | gamma | gamma_zero | two_phase | branching | nonbranching
  Point point{0.0, 0.0, 0.0};
  std::optional<Point> near;
};

struct BallRequest {
  CenterSpec center;
  std::vector<double> radii;  // empty: default ladder
};

struct StripRequest {
  CenterSpec center;
  double radius = 0.0;
  std::vector<double> eps;
};

struct SetRequest {
  std::string set = "two_phase";
  std::vector<double> ladder;
  std::optional<BallRequest> region;  // center + one radius; default: whole grid
};

struct CaccioppoliRequest {
  CenterSpec center;
  std::vector<double> levels;
  std::vector<std::array<double, 2>> pairs;
};

struct ExperimentConfig {
  json normalized;  // every effective value, defaults filled in
  ParamsSpec params;
  std::vector<Interval> domain;
  std::vector<std::size_t> resolution;
  std::string boundary;
  std::string initial;  // empty: zero interior
  SolverConfig solver;
  double zero_scale = 0.5, grad_scale = 2.0;
  std::vector<BallRequest> growth, density, perimeter, porosity;
  std::vector<StripRequest> strips;
  std::vector<SetRequest> minkowski, box_dimension;
  std::vector<CaccioppoliRequest> caccioppoli;
  std::vector<SweepSpec> sweeps;
  std::string output = "out";
  std::optional<std::uint64_t> seed;
};

namespace detail {

inline const std::set<std::string> kCenterKinds = {"gamma", "gamma_zero", "two_phase", "branching", "nonbranching"};

inline Point parse_point(const json& j, int dim, const std::string& where) {
  const auto v = number_list(j, where);
  if (static_cast<int>(v.size()) != dim) throw ConfigError(where + ": expected " + std::to_string(dim) + " coordinates");
  Point p{0.0, 0.0, 0.0};
  for (int k = 0; k < dim; ++k) p[k] = v[static_cast<std::size_t>(k)];
  return p;
}

inline json point_json(const Point& p, int dim) {
  json a = json::array();
  for (int k = 0; k < dim; ++k) a.push_back(p[k]);
  return a;
}

inline CenterSpec parse_center(const json& j, int dim, const std::string& where) {
  CenterSpec c;
  if (j.is_array()) {
    c.point = parse_point(j, dim, where);
    return c;
  }
  if (j.is_string()) {
    c.kind = j.get<std::string>();
  } else if (j.is_object()) {
    check_keys(j, {"set", "near"}, where);
    if (!j.contains("set") || !j.at("set").is_string()) throw ConfigError(where + ": missing 'set'");
    c.kind = j.at("set").get<std::string>();
    if (j.contains("near")) c.near = parse_point(j.at("near"), dim, where + ".near");
  } else {
    throw ConfigError(where + ": expected coordinates, a set name or {set, near}");
  }
  if (!kCenterKinds.count(c.kind)) throw ConfigError(where + ": unknown set '" + c.kind + "'");
  return c;
}

inline json center_json(const CenterSpec& c, int dim) {
  if (c.kind == "point") return point_json(c.point, dim);
  json j = {{"set", c.kind}};
  if (c.near) j["near"] = point_json(*c.near, dim);
  return j;
}

inline std::vector<double> positive_list(const json& j, const std::string& where) {
  auto v = number_list(j, where);
  for (double x : v)
    if (!(x > 0.0)) throw ConfigError(where + ": values must be > 0");
  return v;
}

inline BallRequest parse_ball_request(const json& j, int dim, const std::string& where) {
  check_keys(j, {"center", "radii"}, where);
  BallRequest r;
  if (!j.contains("center")) throw ConfigError(where + ": missing 'center'");
  r.center = parse_center(j.at("center"), dim, where + ".center");
  if (j.contains("radii")) r.radii = positive_list(j.at("radii"), where + ".radii");
  return r;
}

inline json ball_request_json(const BallRequest& r, int dim) {
  json j = {{"center", center_json(r.center, dim)}};
  if (!r.radii.empty()) j["radii"] = r.radii;
  return j;
}

inline const std::set<std::string> kSetNames = {"gamma", "gamma_zero", "two_phase", "branching", "nonbranching",
                                                "positive", "negative", "zero"};

inline SetRequest parse_set_request(const json& j, int dim, const std::string& where, const char* ladder_key) {
  check_keys(j, {"set", ladder_key, "region"}, where);
  SetRequest r;
  if (j.contains("set")) {
    if (!j.at("set").is_string() || !kSetNames.count(j.at("set").get<std::string>()))
      throw ConfigError(where + ".set: unknown node set");
    r.set = j.at("set").get<std::string>();
  }
  if (!j.contains(ladder_key)) throw ConfigError(where + ": missing '" + ladder_key + "'");
  r.ladder = positive_list(j.at(ladder_key), where + "." + ladder_key);
  if (j.contains("region")) {
    const json& reg = j.at("region");
    check_keys(reg, {"center", "radius"}, where + ".region");
    BallRequest b;
    if (!reg.contains("center")) throw ConfigError(where + ".region: missing 'center'");
    b.center = parse_center(reg.at("center"), dim, where + ".region.center");
    const double rad = get_number(reg, "radius", where + ".region");
    if (!(rad > 0.0)) throw ConfigError(where + ".region.radius: must be > 0");
    b.radii = {rad};
    r.region = b;
  }
  return r;
}

inline json set_request_json(const SetRequest& r, int dim, const char* ladder_key) {
  json j = {{"set", r.set}, {ladder_key, r.ladder}};
  if (r.region) j["region"] = {{"center", center_json(r.region->center, dim)}, {"radius", r.region->radii.front()}};
  return j;
}

inline InequalityKind parse_kind(const std::string& s, const std::string& where) {
  if (s == "sum") return InequalityKind::sum;
  if (s == "convexity") return InequalityKind::convexity;
  if (s == "monotonicity") return InequalityKind::monotonicity;
  if (s == "v_equivalence") return InequalityKind::v_equivalence;
  throw ConfigError(where + ": unknown inequality '" + s + "'");
}

template <class T, class Fn>
std::vector<T> parse_list(const json& d, const char* key, Fn&& fn) {
  std::vector<T> out;
  if (!d.contains(key)) return out;
  const json& arr = d.at(key);
  const std::string where = std::string("diagnostics.") + key;
  if (!arr.is_array()) throw ConfigError(where + ": expected an array");
  for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(fn(arr[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  using namespace detail;
  ExperimentConfig c;
  check_keys(j, {"problem", "grid", "solver", "diagnostics", "output", "seed"}, "config");
  if (!j.contains("problem")) throw ConfigError("config: missing 'problem'");
  if (!j.contains("grid")) throw ConfigError("config: missing 'grid'");

  const json& pj = j.at("problem");
  check_keys(pj,
             {"p", "gamma", "lambda_plus", "lambda_minus", "delta", "alpha_p", "eps_fit", "domain", "boundary", "initial"},
             "problem");
  c.params.p = get_number(pj, "p", "problem");
  c.params.gamma = get_number(pj, "gamma", "problem");
  c.params.lambda_plus = get_number(pj, "lambda_plus", "problem");
  c.params.lambda_minus = get_number(pj, "lambda_minus", "problem");
  c.params.delta = number_or(pj, "delta", 1.0, "problem");
  c.params.eps_fit = number_or(pj, "eps_fit", c.params.eps_fit, "problem");
  if (pj.contains("alpha_p")) c.params.alpha_p = get_number(pj, "alpha_p", "problem");
  try {
    Params check(c.params);
    c.params = check.spec();
  } catch (const Error& e) {
    throw ConfigError(std::string("problem: ") + e.what());
  }
  if (!pj.contains("domain") || !pj.at("domain").is_array() || pj.at("domain").empty())
    throw ConfigError("problem.domain: expected [[a, b], ...]");
  for (const auto& iv : pj.at("domain")) {
    const auto ab = number_list(iv, "problem.domain");
    if (ab.size() != 2) throw ConfigError("problem.domain: each interval needs two numbers");
    c.domain.push_back({ab[0], ab[1]});
  }
  const int dim = static_cast<int>(c.domain.size());
  if (dim > kMaxDim) throw ConfigError("problem.domain: at most 3 dimensions");
  if (!pj.contains("boundary") || !pj.at("boundary").is_string())
    throw ConfigError("problem.boundary: expected an expression string");
  c.boundary = pj.at("boundary").get<std::string>();
  if (pj.contains("initial")) {
    if (!pj.at("initial").is_string()) throw ConfigError("problem.initial: expected an expression string");
    c.initial = pj.at("initial").get<std::string>();
  }
  try {
    Expression::parse(c.boundary);
    if (!c.initial.empty()) Expression::parse(c.initial);
  } catch (const Error& e) {
    throw ConfigError(std::string("problem: ") + e.what());
  }

  const json& gj = j.at("grid");
  check_keys(gj, {"resolution"}, "grid");
  if (!gj.contains("resolution")) throw ConfigError("grid: missing 'resolution'");
  for (double v : number_list(gj.at("resolution"), "grid.resolution")) {
    if (v < 2.0 || v != std::floor(v)) throw ConfigError("grid.resolution: integers >= 2 expected");
    c.resolution.push_back(static_cast<std::size_t>(v));
  }
  if (c.resolution.size() != c.domain.size()) throw ConfigError("grid.resolution: one entry per domain axis");
  try {
    Grid check(c.domain, c.resolution);
  } catch (const Error& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }

  double eps_start = 1e-1, eps_stop = 1e-5, per_decade = 2;
  std::string precond = "linearized";
  if (j.contains("solver")) {
    const json& sj = j.at("solver");
    check_keys(sj,
               {"max_iters", "tol_energy", "tol_residual", "armijo_c1", "backtrack", "step_floor", "eps_start",
                "eps_stop", "steps_per_decade", "preconditioner", "deterministic", "relocate", "max_relocations"},
               "solver");
    c.solver.max_iters = static_cast<int>(number_or(sj, "max_iters", c.solver.max_iters, "solver"));
    c.solver.tol_energy = number_or(sj, "tol_energy", c.solver.tol_energy, "solver");
    c.solver.tol_residual = number_or(sj, "tol_residual", c.solver.tol_residual, "solver");
    c.solver.armijo_c1 = number_or(sj, "armijo_c1", c.solver.armijo_c1, "solver");
    c.solver.backtrack = number_or(sj, "backtrack", c.solver.backtrack, "solver");
    c.solver.step_floor = number_or(sj, "step_floor", c.solver.step_floor, "solver");
    eps_start = number_or(sj, "eps_start", eps_start, "solver");
    eps_stop = number_or(sj, "eps_stop", eps_stop, "solver");
    per_decade = number_or(sj, "steps_per_decade", per_decade, "solver");
    if (sj.contains("preconditioner")) {
      if (!sj.at("preconditioner").is_string()) throw ConfigError("solver.preconditioner: expected a string");
      precond = sj.at("preconditioner").get<std::string>();
    }
    if (sj.contains("relocate")) {
      if (!sj.at("relocate").is_boolean()) throw ConfigError("solver.relocate: expected a boolean");
      c.solver.relocate = sj.at("relocate").get<bool>();
    }
    const double reloc = number_or(sj, "max_relocations", c.solver.max_relocations, "solver");
    if (reloc < 0.0 || reloc != std::floor(reloc)) throw ConfigError("solver.max_relocations: integer >= 0 expected");
    c.solver.max_relocations = static_cast<int>(reloc);
    if (sj.contains("deterministic")) {
      if (!sj.at("deterministic").is_boolean()) throw ConfigError("solver.deterministic: expected a boolean");
      c.solver.deterministic = sj.at("deterministic").get<bool>();
    }
  }
  if (precond == "linearized") c.solver.preconditioner = Preconditioner::linearized;
  else if (precond == "diagonal") c.solver.preconditioner = Preconditioner::diagonal;
  else throw ConfigError("solver.preconditioner: expected 'linearized' or 'diagonal'");
  try {
    if (per_decade < 1.0 || per_decade != std::floor(per_decade))
      throw Error("steps_per_decade must be a positive integer");
    c.solver.schedule = default_schedule(eps_start, eps_stop, static_cast<int>(per_decade));
    c.solver.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("solver: ") + e.what());
  }

  if (j.contains("diagnostics")) {
    const json& d = j.at("diagnostics");
    check_keys(d,
               {"tolerances", "growth", "density", "perimeter", "porosity", "strips", "minkowski", "box_dimension",
                "caccioppoli", "inequality_sweeps"},
               "diagnostics");
    if (d.contains("tolerances")) {
      const json& t = d.at("tolerances");
      check_keys(t, {"zero_scale", "grad_scale"}, "diagnostics.tolerances");
      c.zero_scale = number_or(t, "zero_scale", c.zero_scale, "diagnostics.tolerances");
      c.grad_scale = number_or(t, "grad_scale", c.grad_scale, "diagnostics.tolerances");
      if (!(c.zero_scale >= 0.0) || !(c.grad_scale >= 0.0))
        throw ConfigError("diagnostics.tolerances: scales must be >= 0");
    }
    auto ball = [dim](const json& e, const std::string& w) { return parse_ball_request(e, dim, w); };
    c.growth = parse_list<BallRequest>(d, "growth", ball);
    c.density = parse_list<BallRequest>(d, "density", ball);
    c.perimeter = parse_list<BallRequest>(d, "perimeter", ball);
    c.porosity = parse_list<BallRequest>(d, "porosity", ball);
    c.strips = parse_list<StripRequest>(d, "strips", [dim](const json& e, const std::string& w) {
      check_keys(e, {"center", "radius", "eps"}, w);
      StripRequest s;
      if (!e.contains("center")) throw ConfigError(w + ": missing 'center'");
      s.center = parse_center(e.at("center"), dim, w + ".center");
      s.radius = get_number(e, "radius", w);
      if (!(s.radius > 0.0)) throw ConfigError(w + ".radius: must be > 0");
      if (!e.contains("eps")) throw ConfigError(w + ": missing 'eps'");
      s.eps = positive_list(e.at("eps"), w + ".eps");
      return s;
    });
    c.minkowski = parse_list<SetRequest>(
        d, "minkowski", [dim](const json& e, const std::string& w) { return parse_set_request(e, dim, w, "eps"); });
    c.box_dimension = parse_list<SetRequest>(d, "box_dimension", [dim](const json& e, const std::string& w) {
      return parse_set_request(e, dim, w, "scales");
    });
    c.caccioppoli = parse_list<CaccioppoliRequest>(d, "caccioppoli", [dim](const json& e, const std::string& w) {
      check_keys(e, {"center", "levels", "pairs"}, w);
      CaccioppoliRequest r;
      if (!e.contains("center")) throw ConfigError(w + ": missing 'center'");
      r.center = parse_center(e.at("center"), dim, w + ".center");
      if (!e.contains("levels") || !e.contains("pairs")) throw ConfigError(w + ": needs 'levels' and 'pairs'");
      r.levels = number_list(e.at("levels"), w + ".levels");
      if (!e.at("pairs").is_array()) throw ConfigError(w + ".pairs: expected [[r, R], ...]");
      for (const auto& pr : e.at("pairs")) {
        const auto v = positive_list(pr, w + ".pairs");
        if (v.size() != 2 || !(v[0] < v[1])) throw ConfigError(w + ".pairs: expected [r, R] with r < R");
        r.pairs.push_back({v[0], v[1]});
      }
      return r;
    });
    c.sweeps = parse_list<SweepSpec>(d, "inequality_sweeps", [](const json& e, const std::string& w) {
      check_keys(e, {"kind", "p", "eps", "count", "dim", "range"}, w);
      SweepSpec s;
      if (!e.contains("kind") || !e.at("kind").is_string()) throw ConfigError(w + ": missing 'kind'");
      s.kind = parse_kind(e.at("kind").get<std::string>(), w + ".kind");
      s.p = get_number(e, "p", w);
      s.eps = number_or(e, "eps", s.eps, w);
      const double count = number_or(e, "count", static_cast<double>(s.count), w);
      const double sdim = number_or(e, "dim", s.dim, w);
      s.range = number_or(e, "range", s.range, w);
      if (count < 1.0 || count != std::floor(count)) throw ConfigError(w + ".count: positive integer expected");
      if (sdim < 1.0 || sdim != std::floor(sdim)) throw ConfigError(w + ".dim: positive integer expected");
      s.count = static_cast<std::size_t>(count);
      s.dim = static_cast<int>(sdim);
      const double pmin = s.kind == InequalityKind::sum ? 0.0 : 1.0;
      if (!(s.p > pmin)) throw ConfigError(w + ".p: out of range");
      if (!(s.eps > 0.0) || !(s.range > 0.0)) throw ConfigError(w + ": eps and range must be > 0");
      return s;
    });
  }

  if (j.contains("output")) {
    if (!j.at("output").is_string()) throw ConfigError("output: expected a path string");
    c.output = j.at("output").get<std::string>();
  }
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) throw ConfigError("seed: expected a nonnegative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  if (!c.sweeps.empty() && !c.seed) throw ConfigError("seed: required when inequality_sweeps are requested");
  for (std::size_t i = 0; i < c.sweeps.size(); ++i) c.sweeps[i].seed = *c.seed + i;

  // Normalized form, used for the manifest hash.
  json n;
  n["problem"] = {{"p", c.params.p},
                  {"gamma", c.params.gamma},
                  {"lambda_plus", c.params.lambda_plus},
                  {"lambda_minus", c.params.lambda_minus},
                  {"delta", c.params.delta},
                  {"alpha_p", *c.params.alpha_p},
                  {"eps_fit", c.params.eps_fit},
                  {"boundary", c.boundary},
                  {"initial", c.initial}};
  json dom = json::array();
  for (const auto& iv : c.domain) dom.push_back(json::array({iv.lower, iv.upper}));
  n["problem"]["domain"] = dom;
  n["grid"] = {{"resolution", c.resolution}};
  n["solver"] = {{"max_iters", c.solver.max_iters},       {"tol_energy", c.solver.tol_energy},
                 {"tol_residual", c.solver.tol_residual}, {"armijo_c1", c.solver.armijo_c1},
                 {"backtrack", c.solver.backtrack},       {"step_floor", c.solver.step_floor},
                 {"eps_start", eps_start},                {"eps_stop", eps_stop},
                 {"steps_per_decade", per_decade},        {"preconditioner", precond},
                 {"deterministic", c.solver.deterministic}, {"relocate", c.solver.relocate},
                 {"max_relocations", c.solver.max_relocations}};
  json dn;
  dn["tolerances"] = {{"zero_scale", c.zero_scale}, {"grad_scale", c.grad_scale}};
  auto balls = [dim](const std::vector<BallRequest>& v) {
    json a = json::array();
    for (const auto& r : v) a.push_back(ball_request_json(r, dim));
    return a;
  };
  dn["growth"] = balls(c.growth);
  dn["density"] = balls(c.density);
  dn["perimeter"] = balls(c.perimeter);
  dn["porosity"] = balls(c.porosity);
  dn["strips"] = json::array();
  for (const auto& s : c.strips)
    dn["strips"].push_back({{"center", center_json(s.center, dim)}, {"radius", s.radius}, {"eps", s.eps}});
  dn["minkowski"] = json::array();
  for (const auto& s : c.minkowski) dn["minkowski"].push_back(set_request_json(s, dim, "eps"));
  dn["box_dimension"] = json::array();
  for (const auto& s : c.box_dimension) dn["box_dimension"].push_back(set_request_json(s, dim, "scales"));
  dn["caccioppoli"] = json::array();
  for (const auto& r : c.caccioppoli) {
    json pairs = json::array();
    for (const auto& pr : r.pairs) pairs.push_back({pr[0], pr[1]});
    dn["caccioppoli"].push_back({{"center", center_json(r.center, dim)}, {"levels", r.levels}, {"pairs", pairs}});
  }
  dn["inequality_sweeps"] = json::array();
  for (const auto& s : c.sweeps)
    dn["inequality_sweeps"].push_back({{"kind", to_string(s.kind)},
                                       {"p", s.p},
                                       {"eps", s.eps},
                                       {"count", s.count},
                                       {"dim", s.dim},
                                       {"range", s.range}});
  n["diagnostics"] = dn;
  n["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  c.normalized = n;
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

// Output location is excluded: it does not change any written content.
inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a64(c.normalized.dump())); }

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

struct RunOutcome {
  int exit_code = 0;  // 0 ok, 3 solver stall
  json report;
  ScalarField field;
};

namespace detail {

inline Point domain_center(const Grid& g) {
  Point c{0.0, 0.0, 0.0};
  for (int k = 0; k < g.dim(); ++k) c[k] = 0.5 * (g.lower(k) + g.upper(k));
  return c;
}

inline const NodeSet& named_set(const std::string& name, const PhaseDecomposition& d,
                                const FreeBoundaryClassification& c) {
  if (name == "gamma") return c.gamma_all;
  if (name == "gamma_zero") return c.gamma_zero;
  if (name == "two_phase") return c.two_phase;
  if (name == "branching") return c.branching;
  if (name == "nonbranching") return c.nonbranching;
  if (name == "positive") return d.positive_nodes;
  if (name == "negative") return d.negative_nodes;
  if (name == "zero") return d.zero_nodes;
  throw Error("unknown node set '" + name + "'");
}

inline Point resolve_center(const CenterSpec& cs, const Grid& g, const PhaseDecomposition& d,
                            const FreeBoundaryClassification& c) {
  if (cs.kind == "point") return cs.point;
  const NodeSet& set = named_set(cs.kind, d, c);
  if (set.empty()) throw Error("center: node set '" + cs.kind + "' is empty");
  const Point ref = cs.near.value_or(domain_center(g));
  Index best = set.front();
  double best_d = std::numeric_limits<double>::infinity();
  bool best_zero = false;
  for (Index i : set) {
    const bool zero = d.labels[i] == Phase::zero;
    const double dist = distance(g.point(i), ref, g.dim());
    if ((zero && !best_zero) || (zero == best_zero && dist < best_d)) {
      best = i;
      best_d = dist;
      best_zero = zero;
    }
  }
  return g.point(best);
}

inline json fit_json(const FitResult& f) {
  return {{"slope", f.slope},         {"intercept", f.intercept},   {"r_squared", f.r_squared},
          {"residual", f.residual},   {"window_min", f.window_min}, {"window_max", f.window_max},
          {"points", f.points},       {"dropped", f.dropped}};
}

inline std::string point_text(const Point& p, int dim) {
  std::string s;
  for (int k = 0; k < dim; ++k) {
    if (k) s += ';';
    s += format_double(p[k]);
  }
  return s;
}

struct CsvWriter {
  std::ostringstream os;
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) os << ',';
      os << cells[i];
    }
    os << '\n';
  }
};

inline std::string num(double v) { return std::isfinite(v) ? format_double(v) : std::string(); }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed for " + path.string());
}

inline json classification_sets(const FreeBoundaryClassification& c) {
  return {{"gamma_zero", c.gamma_zero},
          {"two_phase", c.two_phase},
          {"branching", c.branching},
          {"nonbranching", c.nonbranching}};
}

}  // namespace detail

// Builds the initial field: boundary expression on the box boundary (fixed),
// inside either the initial expression or the p-harmonic extension of the
// boundary data.
inline ScalarField initial_field(const ExperimentConfig& c) {
  const Grid g(c.domain, c.resolution);
  const Expression bnd = Expression::parse(c.boundary);
  ScalarField f = ScalarField::sample(g, [&](const Point& x) { return bnd(x); });
  f.fix_box_boundary();
  if (c.initial.empty()) {
    for (Index i = 0; i < g.size(); ++i)
      if (!f.masked(i)) f.values()[i] = 0.0;
    SolveResult ext = p_harmonic_extension(f, c.params.p, c.solver);
    if (ext.status == SolveStatus::stalled) throw Error("initial p-harmonic extension stalled: " + ext.message);
    f = std::move(ext.field);
  } else {
    const Expression init = Expression::parse(c.initial);
    for (Index i = 0; i < g.size(); ++i)
      if (!f.masked(i)) f.values()[i] = init(g.point(i));
  }
  f.check_finite();
  return f;
}

// Solves and measures everything requested; no files are touched.
inline RunOutcome execute(const ExperimentConfig& c, std::string* diagnostics_csv = nullptr,
                          std::string* profiles_csv = nullptr) {
  using namespace detail;
  const Params prm(c.params);
  const ScalarField init = initial_field(c);
  const Grid& g = init.grid();
  const int dim = g.dim();

  RunOutcome out;
  SolveResult sr = minimize(init, prm, c.solver);
  out.field = sr.field;
  json& rep = out.report;
  rep["format"] = "apl-report/1";
  rep["params"] = {{"p", prm.p()},
                   {"gamma", prm.gamma()},
                   {"lambda_plus", prm.lambda_plus()},
                   {"lambda_minus", prm.lambda_minus()},
                   {"delta", prm.delta()},
                   {"alpha_p", prm.alpha_p()},
                   {"tau", prm.tau()},
                   {"tau_star", prm.tau_star()},
                   {"restricted_range", prm.restricted_range()}};
  json spacing = json::array();
  for (int k = 0; k < dim; ++k) spacing.push_back(g.spacing(k));
  rep["grid"] = {{"resolution", c.resolution}, {"spacing", spacing}, {"nodes", g.size()}};
  json stages = json::array();
  for (const auto& s : sr.stages)
    stages.push_back({{"eps_pot", s.reg.eps_pot},
                      {"eps_grad", s.reg.eps_grad},
                      {"iterations", s.iterations},
                      {"energy_start", s.energy_start},
                      {"energy_end", s.energy_end},
                      {"residual", s.residual},
                      {"indefinite_steps", s.indefinite_steps},
                      {"exit", to_string(s.exit)}});
  rep["solver"] = {{"status", to_string(sr.status)},       {"message", sr.message},
                   {"iterations", sr.iterations},          {"final_residual", sr.final_residual},
                   {"initial_energy", sr.initial_energy},  {"final_energy", sr.final_energy},
                   {"relocation_trials", sr.relocation_trials},
                   {"relocations_accepted", sr.relocations_accepted},
                   {"stages", stages}};
  if (sr.status == SolveStatus::stalled) {
    out.exit_code = 3;
    return out;
  }

  const ScalarField& u = sr.field;
  rep["el_residual"] = el_residual(u, prm);
  const PhaseTolerances tol = PhaseTolerances::for_grid(g, prm, c.zero_scale, c.grad_scale);
  const PhaseDecomposition dec = decompose(u, tol.zero_tol);
  const VectorField grad = gradient_field(u);
  const FreeBoundaryClassification cls = classify(dec, grad, tol.grad_tol);
  rep["phases"] = {{"zero_tol", tol.zero_tol},
                   {"grad_tol", tol.grad_tol},
                   {"positive", dec.positive_nodes.size()},
                   {"negative", dec.negative_nodes.size()},
                   {"zero", dec.zero_nodes.size()},
                   {"gamma", cls.gamma_all.size()},
                   {"gamma_zero", cls.gamma_zero.size()},
                   {"two_phase", cls.two_phase.size()},
                   {"branching", cls.branching.size()},
                   {"nonbranching", cls.nonbranching.size()},
                   {"sets", classification_sets(cls)}};

  CsvWriter diag, prof;
  diag.row({"diagnostic", "item", "center", "radius", "scale", "value", "fit_slope", "fit_residual"});
  prof.row({"kind", "profile", "center", "r", "sup_abs", "sup_plus", "sup_minus", "dirichlet", "quantity", "slope",
            "intercept", "r_squared", "residual", "window_min", "window_max"});
  json& dj = rep["diagnostics"];
  dj = json::object();
  auto center_of = [&](const CenterSpec& cs) { return resolve_center(cs, g, dec, cls); };

  dj["growth"] = json::array();
  for (std::size_t i = 0; i < c.growth.size(); ++i) {
    const Point z = center_of(c.growth[i].center);
    const auto radii = c.growth[i].radii.empty() ? default_radius_ladder(g, z) : c.growth[i].radii;
    const GrowthProfile gp = growth_profile(u, z, radii, prm);
    const std::string zt = point_text(z, dim);
    for (std::size_t k = 0; k < gp.radii.size(); ++k)
      prof.row({"profile", std::to_string(i), zt, num(gp.radii[k]), num(gp.sup_abs[k]), num(gp.sup_plus[k]),
                num(gp.sup_minus[k]), num(gp.dirichlet[k]), "", "", "", "", "", "", ""});
    json fits = json::object();
    const std::pair<const char*, GrowthQuantity> qs[] = {{"sup_abs", GrowthQuantity::sup_abs},
                                                         {"sup_plus", GrowthQuantity::sup_plus},
                                                         {"sup_minus", GrowthQuantity::sup_minus},
                                                         {"dirichlet", GrowthQuantity::dirichlet}};
    for (const auto& [name, q] : qs) {
      try {
        const FitResult f = fit_exponent(gp, q);
        fits[name] = fit_json(f);
        prof.row({"fit", std::to_string(i), zt, "", "", "", "", "", name, num(f.slope), num(f.intercept),
                  num(f.r_squared), num(f.residual), num(f.window_min), num(f.window_max)});
        diag.row({std::string("growth_fit:") + name, std::to_string(i), zt, "", "", "", num(f.slope),
                  num(f.residual)});
      } catch (const Error& e) {
        fits[name] = {{"error", e.what()}};
      }
    }
    const double nd_plus = nondegeneracy_ratio(gp, prm, +1), nd_minus = nondegeneracy_ratio(gp, prm, -1);
    diag.row({"nondegeneracy:+", std::to_string(i), zt, "", "", num(nd_plus), "", ""});
    diag.row({"nondegeneracy:-", std::to_string(i), zt, "", "", num(nd_minus), "", ""});
    dj["growth"].push_back({{"center", point_json(z, dim)},
                            {"radii", gp.radii},
                            {"sup_abs", gp.sup_abs},
                            {"sup_plus", gp.sup_plus},
                            {"sup_minus", gp.sup_minus},
                            {"dirichlet", gp.dirichlet},
                            {"expected_slope", 1.0 + prm.tau_star()},
                            {"fits", fits},
                            {"nondegeneracy_plus", nd_plus},
                            {"nondegeneracy_minus", nd_minus}});
  }

  auto radii_for = [&](const BallRequest& r, const Point& z) {
    return r.radii.empty() ? default_radius_ladder(g, z) : r.radii;
  };

  dj["density"] = json::array();
  for (std::size_t i = 0; i < c.density.size(); ++i) {
    const Point z = center_of(c.density[i].center);
    json rows = json::array();
    for (double r : radii_for(c.density[i], z)) {
      const BallSpec b{z, r};
      const double dp = phase_density(dec, b, Phase::positive), dm = phase_density(dec, b, Phase::negative);
      diag.row({"density:+", std::to_string(i), point_text(z, dim), num(r), "", num(dp), "", ""});
      diag.row({"density:-", std::to_string(i), point_text(z, dim), num(r), "", num(dm), "", ""});
      rows.push_back({{"radius", r}, {"positive", dp}, {"negative", dm}});
    }
    dj["density"].push_back({{"center", point_json(z, dim)}, {"values", rows}});
  }

  dj["perimeter"] = json::array();
  for (std::size_t i = 0; i < c.perimeter.size(); ++i) {
    const Point z = center_of(c.perimeter[i].center);
    json rows = json::array();
    for (double r : radii_for(c.perimeter[i], z)) {
      const PerimeterEstimate pe = relative_perimeter(u, BallSpec{z, r});
      const double ratio = pe.value / std::pow(r, dim - 1);
      diag.row({"perimeter", std::to_string(i), point_text(z, dim), num(r), "", num(pe.value), "", ""});
      diag.row({"perimeter_ratio", std::to_string(i), point_text(z, dim), num(r), "", num(ratio), "", ""});
      rows.push_back({{"radius", r}, {"perimeter", pe.value}, {"ratio", ratio}, {"approximate", pe.approximate}});
    }
    dj["perimeter"].push_back({{"center", point_json(z, dim)}, {"values", rows}});
  }

  dj["porosity"] = json::array();
  if (!c.porosity.empty()) {
    const auto dist = distance_to_set(g, cls.gamma_zero);
    for (std::size_t i = 0; i < c.porosity.size(); ++i) {
      const Point z = center_of(c.porosity[i].center);
      json rows = json::array();
      for (double r : radii_for(c.porosity[i], z)) {
        const double kappa = porosity_constant(g, cls.gamma_zero, dist, BallSpec{z, r});
        diag.row({"porosity", std::to_string(i), point_text(z, dim), num(r), "", num(kappa), "", ""});
        rows.push_back({{"radius", r}, {"kappa", kappa}});
      }
      dj["porosity"].push_back({{"center", point_json(z, dim)}, {"values", rows}});
    }
  }

  dj["strips"] = json::array();
  for (std::size_t i = 0; i < c.strips.size(); ++i) {
    const Point z = center_of(c.strips[i].center);
    const StripLadder sl = level_strip_ladder(u, prm, c.strips[i].eps, BallSpec{z, c.strips[i].radius});
    for (std::size_t k = 0; k < sl.eps.size(); ++k)
      diag.row({"strip_energy", std::to_string(i), point_text(z, dim), num(c.strips[i].radius), num(sl.eps[k]),
                num(sl.energy[k]), "", ""});
    json entry = {{"center", point_json(z, dim)}, {"radius", c.strips[i].radius}, {"eps", sl.eps},
                  {"energy", sl.energy}};
    if (sl.fit) {
      entry["fit"] = fit_json(*sl.fit);
      diag.row({"strip_fit", std::to_string(i), point_text(z, dim), num(c.strips[i].radius), "", "",
                num(sl.fit->slope), num(sl.fit->residual)});
    }
    dj["strips"].push_back(entry);
  }

  auto region_mask = [&](const SetRequest& r) {
    if (!r.region) return full_mask(g);
    return ball_mask(g, BallSpec{center_of(r.region->center), r.region->radii.front()});
  };

  dj["minkowski"] = json::array();
  for (std::size_t i = 0; i < c.minkowski.size(); ++i) {
    const auto& req = c.minkowski[i];
    const MinkowskiResult mr = minkowski_content(g, named_set(req.set, dec, cls), req.ladder, region_mask(req));
    for (std::size_t k = 0; k < mr.eps.size(); ++k)
      diag.row({"minkowski_tube:" + req.set, std::to_string(i), "", "", num(mr.eps[k]), num(mr.tube_measure[k]), "",
                ""});
    json entry = {{"set", req.set}, {"eps", mr.eps}, {"tube_measure", mr.tube_measure}, {"content", mr.content}};
    if (mr.fit) {
      entry["fit"] = fit_json(*mr.fit);
      diag.row({"minkowski_fit:" + req.set, std::to_string(i), "", "", "", "", num(mr.fit->slope),
                num(mr.fit->residual)});
    }
    dj["minkowski"].push_back(entry);
  }

  dj["box_dimension"] = json::array();
  for (std::size_t i = 0; i < c.box_dimension.size(); ++i) {
    const auto& req = c.box_dimension[i];
    const FitResult f = box_dimension(g, named_set(req.set, dec, cls), req.ladder);
    diag.row({"box_dimension:" + req.set, std::to_string(i), "", "", "", "", num(f.slope), num(f.residual)});
    dj["box_dimension"].push_back({{"set", req.set}, {"scales", req.ladder}, {"fit", fit_json(f)}});
  }

  dj["caccioppoli"] = json::array();
  for (std::size_t i = 0; i < c.caccioppoli.size(); ++i) {
    const auto& req = c.caccioppoli[i];
    const Point z = center_of(req.center);
    json rows = json::array();
    double worst = 0.0;
    for (double k : req.levels)
      for (const auto& pr : req.pairs) {
        const CaccioppoliResult cr = caccioppoli_check(u, z, k, pr[0], pr[1], prm);
        worst = std::max(worst, cr.ratio);
        const std::string item = "k=" + format_double(k) + ";r=" + format_double(pr[0]) + ";R=" + format_double(pr[1]);
        diag.row({"caccioppoli", item, point_text(z, dim), num(pr[1]), num(pr[0]), num(cr.ratio), "", ""});
        rows.push_back({{"k", k}, {"r", pr[0]}, {"R", pr[1]}, {"lhs", cr.lhs}, {"rhs", cr.rhs}, {"ratio", cr.ratio}});
      }
    dj["caccioppoli"].push_back({{"center", point_json(z, dim)}, {"values", rows}, {"max_ratio", worst}});
  }

  dj["inequality_sweeps"] = json::array();
  for (const auto& spec : c.sweeps) {
    SweepSpec s = spec;
    json extra = json::object();
    if (s.kind == InequalityKind::v_equivalence) {
      const VCalibration cal = calibrate_v_constant(s.p, s.seed);
      s.c = cal.c;
      extra = {{"worst_ratio", cal.worst_ratio}, {"c", cal.c}};
    }
    if (s.kind == InequalityKind::monotonicity) extra = {{"C", monotonicity_constant(s.p)}};
    const SweepSummary sum = sweep(s);
    const std::string item = std::string(to_string(s.kind)) + ":p=" + format_double(s.p);
    diag.row({"inequality", item, "", "", "", num(sum.min_relative_margin), "", ""});
    dj["inequality_sweeps"].push_back({{"kind", to_string(s.kind)},
                                       {"p", s.p},
                                       {"eps", s.eps},
                                       {"evaluated", sum.evaluated},
                                       {"min_margin", sum.min_margin},
                                       {"min_relative_margin", sum.min_relative_margin},
                                       {"witness_a", sum.witness.a},
                                       {"witness_b", sum.witness.b},
                                       {"constants", extra}});
  }
  if (diagnostics_csv) *diagnostics_csv = diag.os.str();
  if (profiles_csv) *profiles_csv = prof.os.str();
  return out;
}

inline json manifest(const ExperimentConfig& c) {
  return {{"format", "apl-manifest/1"},
          {"config_hash", "fnv1a64:" + config_hash(c)},
          {"config", c.normalized},
          {"seed", c.seed ? json(*c.seed) : json(nullptr)},
          {"versions",
           {{"apl", kVersion},
            {"csv_contract", kCsvContract},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"compiler", __VERSION__}}}};
}

// Runs the experiment and writes the bundle into `dir`. Returns 0 or 3 (stall,
// with a partial report).
inline int run_experiment(const ExperimentConfig& c, const std::filesystem::path& dir) {
  std::string diag_csv, prof_csv;
  RunOutcome out = execute(c, &diag_csv, &prof_csv);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  detail::write_text(dir / "field.apf", serialize_field(out.field));
  detail::write_text(dir / "report.json", out.report.dump(2) + "\n");
  if (out.exit_code == 0) {
    detail::write_text(dir / "diagnostics.csv", diag_csv);
    detail::write_text(dir / "profiles.csv", prof_csv);
  }
  detail::write_text(dir / "manifest.json", manifest(c).dump(2) + "\n");
  return out.exit_code;
}

// ---------------------------------------------------------------------------
// Comparing bundles
// ---------------------------------------------------------------------------

struct CompareEntry {
  std::string path;
  double a = 0.0, b = 0.0, delta = 0.0;
};

struct CompareResult {
  double field_sup_diff = 0.0;
  bool interpolated = false;  // grids differ in resolution only
  std::vector<CompareEntry> entries;
  std::vector<std::string> missing;  // numeric leaves present in only one report
};

namespace detail {

inline void flatten_numbers(const json& j, const std::string& path, std::map<std::string, double>& out) {
  if (j.is_number()) {
    out[path] = j.get<double>();
  } else if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) flatten_numbers(it.value(), path + "/" + it.key(), out);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) flatten_numbers(j[i], path + "/" + std::to_string(i), out);
  }
}

inline ScalarField read_field_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot read " + p.string());
  return read_field(is);
}

inline json read_json_file(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot read " + p.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw IoError(p.string() + ": " + e.what());
  }
}

}  // namespace detail

// Field sup-difference (interpolating the finer field onto the coarser grid
// when resolutions differ) and deltas of every numeric diagnostic plus the
// final energy and residual.
inline CompareResult compare_bundles(const std::filesystem::path& a, const std::filesystem::path& b) {
  const ScalarField fa = detail::read_field_file(a / "field.apf");
  const ScalarField fb = detail::read_field_file(b / "field.apf");
  const Grid &ga = fa.grid(), &gb = fb.grid();
  if (ga.dim() != gb.dim()) throw Error("compare: incompatible grids (dimension mismatch)");
  for (int k = 0; k < ga.dim(); ++k)
    if (std::abs(ga.lower(k) - gb.lower(k)) > 1e-12 || std::abs(ga.upper(k) - gb.upper(k)) > 1e-12)
      throw Error("compare: incompatible grids (different domains)");
  CompareResult res;
  if (ga == gb) {
    for (Index i = 0; i < ga.size(); ++i) res.field_sup_diff = std::max(res.field_sup_diff, std::abs(fa[i] - fb[i]));
  } else {
    res.interpolated = true;
    const bool a_coarse = ga.size() <= gb.size();
    const ScalarField& coarse = a_coarse ? fa : fb;
    const ScalarField& fine = a_coarse ? fb : fa;
    for (Index i = 0; i < coarse.size(); ++i)
      res.field_sup_diff =
          std::max(res.field_sup_diff, std::abs(coarse[i] - interpolate(fine, coarse.grid().point(i))));
  }
  const json ra = detail::read_json_file(a / "report.json");
  const json rb = detail::read_json_file(b / "report.json");
  std::map<std::string, double> na, nb;
  for (const char* key : {"diagnostics", "el_residual"}) {
    if (ra.contains(key)) detail::flatten_numbers(ra.at(key), std::string("/") + key, na);
    if (rb.contains(key)) detail::flatten_numbers(rb.at(key), std::string("/") + key, nb);
  }
  for (const char* key : {"final_energy", "final_residual"}) {
    if (ra.contains("solver") && ra["solver"].contains(key)) na[std::string("/solver/") + key] = ra["solver"][key];
    if (rb.contains("solver") && rb["solver"].contains(key)) nb[std::string("/solver/") + key] = rb["solver"][key];
  }
  for (const auto& [path, va] : na) {
    auto it = nb.find(path);
    if (it == nb.end()) {
      res.missing.push_back(path);
      continue;
    }
    res.entries.push_back({path, va, it->second, std::abs(va - it->second)});
  }
  for (const auto& [path, vb] : nb)
    if (!na.count(path)) res.missing.push_back(path);
  return res;
}

}  // namespace apl
