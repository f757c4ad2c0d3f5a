// scalelab.hpp
//
// Rescaling u_s(x) = u(r x + z) / s, growth profiles over radius ladders,
// exponent fits and the Caccioppoli integrals.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "apl/core.hpp"
#include "apl/energy.hpp"
#include "apl/fit.hpp"

namespace apl {

struct Rescaled {
  ScalarField field;  // on the box around B_{R/r}(0)
  Params params;      // delta' = delta r^p s^(gamma - p)
  double energy_factor = 1.0;  // J_{B_R(z)}[u] = energy_factor * J'_{B_{R/r}}[u_s]
};

// Samples u_s on [-R/r, R/r]^N padded by one target cell, so nodes on the
// sphere keep all their corner neighbours. Without an explicit resolution the
// target spacing is h/r, and target nodes land on source nodes whenever z is
// a node and R is a multiple of h. Points outside the domain (never inside the
// ball) are evaluated at the nearest domain point.
inline Rescaled rescale(const ScalarField& f, const Point& z, double r, double s, const Params& prm, double R,
                        std::optional<std::size_t> resolution = std::nullopt) {
  const Grid& g = f.grid();
  if (!(r > 0.0) || !(s > 0.0) || !(R > 0.0)) throw Error("rescale: r, s and R must be > 0");
  if (!ball_inside(g, BallSpec{z, R})) throw Error("rescale: ball exceeds the domain");
  const int dim = g.dim();
  std::vector<Interval> ext;
  std::vector<std::size_t> res;
  for (int k = 0; k < dim; ++k) {
    const std::size_t inner =
        resolution ? *resolution : static_cast<std::size_t>(std::llround(2.0 * R / g.spacing(k))) + 1;
    if (inner < 2) throw Error("rescale: resolution must be >= 2");
    const double pad = 2.0 * R / r / static_cast<double>(inner - 1);
    ext.push_back({-R / r - pad, R / r + pad});
    res.push_back(inner + 2);
  }
  Grid target(ext, res);
  ScalarField out = ScalarField::sample(target, [&](const Point& y) {
    Point x{0.0, 0.0, 0.0};
    for (int k = 0; k < dim; ++k) x[k] = std::clamp(r * y[k] + z[k], g.lower(k), g.upper(k));
    return interpolate(f, x) / s;
  });
  const double delta = prm.delta() * std::pow(r, prm.p()) * std::pow(s, prm.gamma() - prm.p());
  const double factor = std::pow(r, dim - prm.p()) * std::pow(s, prm.p());
  return {std::move(out), prm.with_delta(delta), factor};
}

struct GrowthProfile {
  Point center{0.0, 0.0, 0.0};
  double h = 0.0;              // grid spacing of the source field
  std::vector<double> radii;   // decreasing
  std::vector<double> sup_abs, sup_plus, sup_minus;
  std::vector<double> dirichlet;  // int_{B_r} |grad u|^p
};

enum class GrowthQuantity { sup_abs, sup_plus, sup_minus, dirichlet };

// r_j = R0 2^-j, j = 0..5, R0 = min(dist(center, boundary) / 2, domain / 4),
// stopping before radii below 2h.
inline std::vector<double> default_radius_ladder(const Grid& g, const Point& center, int levels = 6) {
  double to_boundary = std::numeric_limits<double>::infinity();
  for (int k = 0; k < g.dim(); ++k)
    to_boundary = std::min({to_boundary, center[k] - g.lower(k), g.upper(k) - center[k]});
  const double r0 = std::min(0.5 * to_boundary, 0.25 * g.domain_size());
  std::vector<double> out;
  const double floor = 2.0 * g.max_spacing() * (1.0 - 1e-12);
  for (int j = 0; j < levels && r0 * std::ldexp(1.0, -j) >= floor; ++j) out.push_back(r0 * std::ldexp(1.0, -j));
  return out;
}

inline GrowthProfile growth_profile(const ScalarField& f, const Point& center, std::vector<double> radii,
                                    const Params& prm) {
  const Grid& g = f.grid();
  const double h = g.max_spacing();
  std::sort(radii.begin(), radii.end(), std::greater<>());
  GrowthProfile prof;
  prof.center = center;
  prof.h = h;
  for (double r : radii) {
    if (r < 2.0 * h * (1.0 - 1e-12)) throw Error("growth_profile: radius below 2h");
    const BallSpec ball{center, r};
    if (!ball_inside(g, ball)) throw Error("growth_profile: ball exceeds the domain");
    const NodeMask m = ball_mask(g, ball);
    double sa = 0.0, sp = 0.0, sm = 0.0;
    for (Index i = 0; i < g.size(); ++i) {
      if (!m[i]) continue;
      sp = std::max(sp, f[i]);
      sm = std::max(sm, -f[i]);
    }
    sa = std::max(sp, sm);
    prof.radii.push_back(r);
    prof.sup_abs.push_back(sa);
    prof.sup_plus.push_back(sp);
    prof.sup_minus.push_back(sm);
    prof.dirichlet.push_back(prm.p() * dirichlet_energy(f, prm.p(), 0.0, m));
  }
  return prof;
}

inline const std::vector<double>& profile_values(const GrowthProfile& prof, GrowthQuantity q) {
  switch (q) {
    case GrowthQuantity::sup_abs: return prof.sup_abs;
    case GrowthQuantity::sup_plus: return prof.sup_plus;
    case GrowthQuantity::sup_minus: return prof.sup_minus;
    case GrowthQuantity::dirichlet: return prof.dirichlet;
  }
  throw Error("profile_values: unknown quantity");
}

// Slope of log(value) against log(r) over radii >= min_cells * h.
inline FitResult fit_exponent(const GrowthProfile& prof, GrowthQuantity q, double min_cells = 8.0) {
  const auto& vals = profile_values(prof, q);
  std::vector<double> r, v;
  for (std::size_t j = 0; j < prof.radii.size(); ++j) {
    if (prof.radii[j] < min_cells * prof.h * (1.0 - 1e-12)) continue;
    r.push_back(prof.radii[j]);
    v.push_back(vals[j]);
  }
  if (r.size() < 3) throw Error("fit_exponent: fewer than 3 radii in the fit window");
  return fit_log_log(r, v);
}

// min over the ladder of sup u_(+/-)(r) / r^(1 + tau).
inline double nondegeneracy_ratio(const GrowthProfile& prof, const Params& prm, int sign) {
  if (prof.radii.empty()) throw Error("nondegeneracy_ratio: empty profile");
  const auto& sup = sign > 0 ? prof.sup_plus : prof.sup_minus;
  double out = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < prof.radii.size(); ++j)
    out = std::min(out, sup[j] / std::pow(prof.radii[j], 1.0 + prm.tau()));
  return out;
}

struct CaccioppoliResult {
  double lhs = 0.0;  // int_{B_r} |grad (u - k)_+|^p
  double rhs = 0.0;  // (R - r)^-p int_{B_R} (u - k)_+^p
  double ratio = 0.0;  // lhs / rhs, 0 when both vanish
};

inline CaccioppoliResult caccioppoli_check(const ScalarField& f, const Point& center, double k, double r, double R,
                                           const Params& prm) {
  if (!(r < R)) throw Error("caccioppoli_check: need r < R");
  const Grid& g = f.grid();
  if (!ball_inside(g, BallSpec{center, R})) throw Error("caccioppoli_check: ball exceeds the domain");
  const double p = prm.p();
  ScalarField trunc(g);
  for (Index i = 0; i < g.size(); ++i) trunc.values()[i] = std::max(f[i] - k, 0.0);
  CaccioppoliResult out;
  const NodeMask inner = ball_mask(g, BallSpec{center, r});
  if (std::any_of(inner.begin(), inner.end(), [](std::uint8_t m) { return m != 0; }))
    out.lhs = p * dirichlet_energy(trunc, p, 0.0, inner);
  double acc = 0.0;
  const BallSpec outer{center, R};
  for (Index i = 0; i < g.size(); ++i)
    if (in_ball(g, i, outer)) acc += g.weight(i) * std::pow(trunc[i], p);
  out.rhs = acc / std::pow(R - r, p);
  if (out.rhs > 0.0) out.ratio = out.lhs / out.rhs;
  else if (out.lhs > 0.0) out.ratio = std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace apl
