// oracle.hpp
//
// Ground truth that does not go through the discrete functional: closed-form
// 1D free-boundary profiles, radial p-harmonic functions, and a shooting
// solver for the 1D Euler-Lagrange equation
//
//   (|u'|^(p-2) u')' = delta F'_eps(u)
//
// written as a first-order system in (u, flux).
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "apl/core.hpp"
#include "apl/energy.hpp"

namespace apl {

struct ExactProfile {
  std::function<double(const Point&)> eval;
  double beta = 1.0;  // growth exponent
  double coefficient = 1.0;
  std::string validity;

  double operator()(const Point& x) const { return eval(x); }
  double operator()(double x) const { return eval(Point{x, 0.0, 0.0}); }
};

// A^(p-gamma) beta^(p-1) (beta-1) (p-1) = delta gamma lambda.
inline double one_phase_coefficient(double p, double gamma, double lambda, double delta = 1.0) {
  const double beta = p / (p - gamma);
  return std::pow(delta * gamma * lambda / (std::pow(beta, p - 1.0) * (beta - 1.0) * (p - 1.0)), 1.0 / (p - gamma));
}

// u(x) = A (x_1)_+^beta with beta = p / (p - gamma).
inline ExactProfile one_phase_profile(const Params& prm) {
  if (!(prm.lambda_plus() > 0.0)) throw Error("one_phase_profile: lambda_+ must be > 0");
  if (!(prm.delta() > 0.0)) throw Error("one_phase_profile: delta must be > 0");
  ExactProfile e;
  e.beta = prm.p() / (prm.p() - prm.gamma());
  e.coefficient = one_phase_coefficient(prm.p(), prm.gamma(), prm.lambda_plus(), prm.delta());
  e.validity = "x_1 in R; free boundary at x_1 = 0";
  const double a = e.coefficient, b = e.beta;
  e.eval = [a, b](const Point& x) { return x[0] > 0.0 ? a * std::pow(x[0], b) : 0.0; };
  return e;
}

// A_+ (x_1)_+^beta - A_- (x_1)_-^beta; both halves solve the equation and the
// flux vanishes at 0, so this is a 1D two-phase solution with a branching point.
inline ExactProfile two_phase_profile(const Params& prm) {
  if (!(prm.lambda_plus() > 0.0) || !(prm.lambda_minus() > 0.0))
    throw Error("two_phase_profile: lambda_+ and lambda_- must be > 0");
  if (!(prm.delta() > 0.0)) throw Error("two_phase_profile: delta must be > 0");
  ExactProfile e;
  e.beta = prm.p() / (prm.p() - prm.gamma());
  const double ap = one_phase_coefficient(prm.p(), prm.gamma(), prm.lambda_plus(), prm.delta());
  const double am = one_phase_coefficient(prm.p(), prm.gamma(), prm.lambda_minus(), prm.delta());
  e.coefficient = ap;
  e.validity = "x_1 in R; branching point at x_1 = 0";
  const double b = e.beta;
  e.eval = [ap, am, b](const Point& x) {
    if (x[0] > 0.0) return ap * std::pow(x[0], b);
    if (x[0] < 0.0) return -am * std::pow(-x[0], b);
    return 0.0;
  };
  return e;
}

// |x|^((p-N)/(p-1)) for p != N, log|x| for p = N.
inline ExactProfile radial_p_harmonic(int n, double p) {
  if (n < 2) throw Error("radial_p_harmonic: dimension must be >= 2");
  if (!(p > 1.0)) throw Error("radial_p_harmonic: p must be > 1");
  ExactProfile e;
  e.validity = "x != 0";
  e.coefficient = 1.0;
  if (p == static_cast<double>(n)) {
    e.beta = 0.0;
    e.eval = [n](const Point& x) { return std::log(distance(x, Point{0.0, 0.0, 0.0}, n)); };
  } else {
    const double b = (p - n) / (p - 1.0);
    e.beta = b;
    e.eval = [n, b](const Point& x) { return std::pow(distance(x, Point{0.0, 0.0, 0.0}, n), b); };
  }
  return e;
}

// ---------------------------------------------------------------------------
// Shooting
// ---------------------------------------------------------------------------

struct ShootConfig {
  double eps_pot = 1e-8;
  double step_fraction = 1e-5;  // base step = step_fraction * L
  int scan_points = 48;         // initial flux scan resolution
  int max_expansions = 30;      // doublings of the scan interval
  double match_tol = 1e-10;
  bool verify = true;           // rerun each root at half step
};

struct ShotSolution {
  std::vector<double> x, u, flux;  // at the base steps
  double initial_flux = 0.0;
  double mismatch = 0.0;          // |u(b) - g_b|
  double refinement_delta = 0.0;  // max |u_h - u_{h/2}| at shared nodes
  int crossings = 0;  // sign changes between base steps

  double at(double y) const {
    if (y <= x.front()) return u.front();
    if (y >= x.back()) return u.back();
    const double t = (y - x.front()) / (x.back() - x.front()) * static_cast<double>(x.size() - 1);
    const std::size_t i = std::min(static_cast<std::size_t>(t), x.size() - 2);
    const double s = t - static_cast<double>(i);
    return (1.0 - s) * u[i] + s * u[i + 1];
  }
};

struct ShootReport {
  std::vector<ShotSolution> roots;  // every bracketed root, ordered by initial flux
  double scan_lo = 0.0, scan_hi = 0.0;
};

namespace detail {

inline double flux_to_slope(double q, double p) {
  if (q == 0.0) return 0.0;
  const double m = std::pow(std::abs(q), 1.0 / (p - 1.0));
  return q > 0.0 ? m : -m;
}

struct OdeState {
  double u, q;
};

// One base step of length h. Inside it the step is subdivided so that no
// substep exceeds a fixed fraction of |u| / |u'| (floored at eps), which
// resolves the eps-scale layer of F' at sign changes.
inline OdeState advance(OdeState s, double h, const Params& prm, const Regularization& reg) {
  const double p = prm.p(), delta = prm.delta();
  auto rhs = [&](const OdeState& y) {
    return OdeState{flux_to_slope(y.q, p), delta * potential_derivative(y.u, prm, reg)};
  };
  auto rk4 = [&](const OdeState& y, double dt) {
    const OdeState k1 = rhs(y);
    const OdeState k2 = rhs({y.u + 0.5 * dt * k1.u, y.q + 0.5 * dt * k1.q});
    const OdeState k3 = rhs({y.u + 0.5 * dt * k2.u, y.q + 0.5 * dt * k2.q});
    const OdeState k4 = rhs({y.u + dt * k3.u, y.q + dt * k3.q});
    return OdeState{y.u + dt / 6.0 * (k1.u + 2.0 * k2.u + 2.0 * k3.u + k4.u),
                    y.q + dt / 6.0 * (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q)};
  };
  const double grading = 0.05;
  double left = h;
  while (left > 0.0) {
    const double slope = std::abs(flux_to_slope(s.q, p));
    double dt = left;
    if (slope > 0.0) dt = std::min(dt, grading * std::max(std::abs(s.u), reg.eps_pot) / slope);
    if (dt < left * 1e-12) dt = left * 1e-12;
    if (left - dt < 1e-3 * dt) dt = left;
    s = rk4(s, dt);
    left -= dt;
  }
  return s;
}

inline ShotSolution integrate(double a, double b, double ua, double q0, std::size_t steps, const Params& prm,
                              const Regularization& reg) {
  ShotSolution out;
  out.initial_flux = q0;
  out.x.resize(steps + 1);
  out.u.resize(steps + 1);
  out.flux.resize(steps + 1);
  const double h = (b - a) / static_cast<double>(steps);
  OdeState s{ua, q0};
  for (std::size_t k = 0; k <= steps; ++k) {
    out.x[k] = a + static_cast<double>(k) * h;
    out.u[k] = s.u;
    out.flux[k] = s.q;
    if (k > 0 && (out.u[k] > 0.0) != (out.u[k - 1] > 0.0)) out.crossings += 1;
    if (k < steps) s = advance(s, h, prm, reg);
    if (!std::isfinite(s.u) || !std::isfinite(s.q)) {
      for (std::size_t j = k + 1; j <= steps; ++j) {
        out.x[j] = a + static_cast<double>(j) * h;
        out.u[j] = s.u;
        out.flux[j] = s.q;
      }
      break;
    }
  }
  return out;
}

}  // namespace detail

// Solves the 1D Euler-Lagrange equation on [a, b] with u(a) = ga, u(b) = gb by
// bisection on the initial flux |u'|^(p-2) u'(a). The scan interval grows until
// a sign change of u(b) - gb appears; every bracketed root is refined.
inline ShootReport shoot_two_phase_1d(const Params& prm, double ga, double gb, double a, double b,
                                      const ShootConfig& cfg = {}) {
  if (!(b > a)) throw Error("shoot_two_phase_1d: empty interval");
  if (!(prm.lambda_plus() > 0.0) || !(prm.lambda_minus() > 0.0))
    throw Error("shoot_two_phase_1d: lambda_+ and lambda_- must be > 0");
  const Regularization reg{cfg.eps_pot, 0.0};
  const std::size_t steps = static_cast<std::size_t>(std::llround(1.0 / cfg.step_fraction));
  auto miss = [&](double q) {
    const ShotSolution s = detail::integrate(a, b, ga, q, steps, prm, reg);
    const double m = s.u.back() - gb;
    return std::isfinite(m) ? m : (s.u.back() > 0.0 ? 1e300 : -1e300);
  };
  const double L = b - a;
  double half = std::max(1.0, std::pow(std::abs(gb - ga) / L, prm.p() - 1.0));
  const double center = 0.0;
  ShootReport rep;
  std::vector<double> qs, ms;
  for (int e = 0; e <= cfg.max_expansions; ++e, half *= 2.0) {
    qs.clear();
    ms.clear();
    for (int i = 0; i <= cfg.scan_points; ++i) {
      const double q = center - half + 2.0 * half * static_cast<double>(i) / cfg.scan_points;
      qs.push_back(q);
      ms.push_back(miss(q));
    }
    bool found = false;
    for (std::size_t i = 0; i + 1 < qs.size(); ++i) found |= (ms[i] > 0.0) != (ms[i + 1] > 0.0) || ms[i] == 0.0;
    if (found) break;
    if (e == cfg.max_expansions) throw Error("shoot_two_phase_1d: shooting bracket failure");
  }
  rep.scan_lo = qs.front();
  rep.scan_hi = qs.back();
  for (std::size_t i = 0; i + 1 < qs.size(); ++i) {
    if (ms[i] != 0.0 && (ms[i] > 0.0) == (ms[i + 1] > 0.0)) continue;
    double lo = qs[i], hi = qs[i + 1], mlo = ms[i];
    double q = lo;
    if (mlo != 0.0) {
      for (int it = 0; it < 200; ++it) {
        q = 0.5 * (lo + hi);
        const double m = miss(q);
        if (std::abs(m) <= cfg.match_tol || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(q))
          break;
        if ((m > 0.0) == (mlo > 0.0)) {
          lo = q;
          mlo = m;
        } else {
          hi = q;
        }
      }
    }
    ShotSolution s = detail::integrate(a, b, ga, q, steps, prm, reg);
    s.mismatch = std::abs(s.u.back() - gb);
    if (cfg.verify) {
      const ShotSolution fine = detail::integrate(a, b, ga, q, 2 * steps, prm, reg);
      for (std::size_t k = 0; k < s.u.size(); ++k)
        s.refinement_delta = std::max(s.refinement_delta, std::abs(s.u[k] - fine.u[2 * k]));
    }
    rep.roots.push_back(std::move(s));
  }
  return rep;
}

// Barrier w(x) = c |x - x0|^(p/(p-1)) with the largest c for which
// Delta_p w <= gamma lambda mu^(p-1), mu = (p - gamma)/(p - 1).
inline double barrier_coefficient(const Params& prm, int n, int sign) {
  const double p = prm.p(), g = prm.gamma();
  const double lam = sign > 0 ? prm.lambda_plus() : prm.lambda_minus();
  const double mu = (p - g) / (p - 1.0);
  return mu * (p - 1.0) / p * std::pow(prm.delta() * g * lam / n, 1.0 / (p - 1.0));
}

struct BarrierCheck {
  double barrier = 0.0;     // w on the sphere
  double best_value = 0.0;  // max over boundary points of (u_sign)^mu
  bool holds = false;
};

// 1D: the sphere of B_r(x0) is {x0 - r, x0 + r}.
inline BarrierCheck barrier_check_1d(const std::function<double(double)>& u, const Params& prm, double x0, double r,
                                     int sign) {
  const double p = prm.p();
  const double mu = (p - prm.gamma()) / (p - 1.0);
  BarrierCheck bc;
  bc.barrier = barrier_coefficient(prm, 1, sign) * std::pow(r, p / (p - 1.0));
  for (double y : {x0 - r, x0 + r}) {
    const double part = std::max(sign > 0 ? u(y) : -u(y), 0.0);
    bc.best_value = std::max(bc.best_value, std::pow(part, mu));
  }
  bc.holds = bc.best_value >= bc.barrier;
  return bc;
}

}  // namespace apl
