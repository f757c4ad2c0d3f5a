// inequalities.hpp
//
// Pointwise vector inequalities for p-growth integrands, the map
// V(a) = |a|^((p-2)/2) a, and seeded randomized sweeps over them.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "apl/core.hpp"

namespace apl {

using Vec = std::vector<double>;

// margin >= 0 means the inequality holds. relative_margin divides by the size
// of the compared quantities so that roundoff on large inputs stays small.
struct InequalityReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;
  double relative_margin = 0.0;
  Vec a, b;
};

namespace detail {

inline double norm(const Vec& a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Vec diff(const Vec& a, const Vec& b) {
  Vec d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return d;
}

inline void check_sizes(const Vec& a, const Vec& b) {
  if (a.size() != b.size() || a.empty()) throw Error("inequalities: vectors must have equal nonzero length");
}

// |a|^(q) a with the value 0 at a = 0.
inline Vec scaled_power(const Vec& a, double q) {
  const double n = norm(a);
  Vec out(a.size(), 0.0);
  if (n == 0.0) return out;
  const double s = std::pow(n, q);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
  return out;
}

inline InequalityReport make_report(double lhs, double rhs, double margin, const Vec& a, const Vec& b) {
  InequalityReport r;
  r.lhs = lhs;
  r.rhs = rhs;
  r.margin = margin;
  r.relative_margin = margin / std::max({1.0, std::abs(lhs), std::abs(rhs)});
  r.a = a;
  r.b = b;
  return r;
}

}  // namespace detail

inline Vec v_map(const Vec& a, double p) { return detail::scaled_power(a, 0.5 * (p - 2.0)); }

// |a + b|^p <= |a|^p + |b|^p for p <= 1, and
// |a + b|^p <= (1 + eps)^(p-1) |a|^p + (1 + 1/eps)^(p-1) |b|^p for p >= 1.
inline InequalityReport check_sum_inequality(const Vec& a, const Vec& b, double p, double eps) {
  detail::check_sizes(a, b);
  if (!(p > 0.0)) throw Error("check_sum_inequality: p must be > 0");
  Vec s(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) s[i] = a[i] + b[i];
  const double lhs = std::pow(detail::norm(s), p);
  const double na = std::pow(detail::norm(a), p), nb = std::pow(detail::norm(b), p);
  double rhs;
  if (p < 1.0) {
    rhs = na + nb;
  } else {
    if (!(eps > 0.0)) throw Error("check_sum_inequality: eps must be > 0");
    rhs = std::pow(1.0 + eps, p - 1.0) * na + std::pow(1.0 + 1.0 / eps, p - 1.0) * nb;
  }
  return detail::make_report(lhs, rhs, rhs - lhs, a, b);
}

// |b|^p - |a|^p >= p |a|^(p-2) a . (b - a); the coefficient is 0 at a = 0.
inline InequalityReport check_convexity_inequality(const Vec& a, const Vec& b, double p) {
  detail::check_sizes(a, b);
  if (!(p >= 1.0)) throw Error("check_convexity_inequality: p must be >= 1");
  const double lhs = std::pow(detail::norm(b), p) - std::pow(detail::norm(a), p);
  const double rhs = p * detail::dot(detail::scaled_power(a, p - 2.0), detail::diff(b, a));
  return detail::make_report(lhs, rhs, lhs - rhs, a, b);
}

// Constant of the strong monotonicity bound.
inline double monotonicity_constant(double p) {
  return p >= 2.0 ? std::pow(2.0, 2.0 - p) : (p - 1.0) * std::pow(2.0, p - 2.0);
}

// (|a|^(p-2) a - |b|^(p-2) b) . (a - b) >= C(p) (|a| + |b|)^(p-2) |a - b|^2 for
// p <= 2, and >= C(p) |a - b|^p for p >= 2.
inline InequalityReport check_monotonicity(const Vec& a, const Vec& b, double p) {
  detail::check_sizes(a, b);
  if (!(p > 1.0)) throw Error("check_monotonicity: p must be > 1");
  const Vec d = detail::diff(a, b);
  const Vec fa = detail::scaled_power(a, p - 2.0), fb = detail::scaled_power(b, p - 2.0);
  const double lhs = detail::dot(detail::diff(fa, fb), d);
  const double nd = detail::norm(d);
  double rhs;
  if (p >= 2.0) {
    rhs = monotonicity_constant(p) * std::pow(nd, p);
  } else {
    const double s = detail::norm(a) + detail::norm(b);
    rhs = s == 0.0 ? 0.0 : monotonicity_constant(p) * std::pow(s, p - 2.0) * nd * nd;
  }
  return detail::make_report(lhs, rhs, lhs - rhs, a, b);
}

// c^-1 X <= |V(a) - V(b)|^2 <= c X with X = (|a|^2 + |b|^2)^((p-2)/2) |a - b|^2.
// lhs = |V(a) - V(b)|^2, rhs = X, margin = the smaller of the two one-sided
// margins.
inline InequalityReport check_v_equivalence(const Vec& a, const Vec& b, double p, double c) {
  detail::check_sizes(a, b);
  if (!(c >= 1.0)) throw Error("check_v_equivalence: c must be >= 1");
  const Vec dv = detail::diff(v_map(a, p), v_map(b, p));
  const double lhs = detail::dot(dv, dv);
  const double s2 = detail::dot(a, a) + detail::dot(b, b);
  const double nd = detail::norm(detail::diff(a, b));
  const double x = s2 == 0.0 ? 0.0 : std::pow(s2, 0.5 * (p - 2.0)) * nd * nd;
  const double margin = std::min(lhs - x / c, c * x - lhs);
  InequalityReport r = detail::make_report(lhs, x, margin, a, b);
  r.relative_margin = margin / std::max({1.0, lhs, c * x});
  return r;
}

// Ratio |V(a) - V(b)|^2 / X, which is invariant under scaling and rotation.
inline double v_ratio(const Vec& a, const Vec& b, double p) {
  const Vec dv = detail::diff(v_map(a, p), v_map(b, p));
  const double s2 = detail::dot(a, a) + detail::dot(b, b);
  const double nd = detail::norm(detail::diff(a, b));
  return detail::dot(dv, dv) / (std::pow(s2, 0.5 * (p - 2.0)) * nd * nd);
}

struct VCalibration {
  double p = 2.0;
  double worst_ratio = 1.0;  // max of ratio and 1/ratio found
  double slack = 0.0;
  double c = 1.0;            // worst_ratio * (1 + slack)
};

// Any pair spans a plane, so it suffices to scan a = (1, 0),
// b = t (cos th, sin th) with t in [0, 1] (swap symmetry), followed by random
// refinement around the worst scan point.
inline VCalibration calibrate_v_constant(double p, std::uint64_t seed = 1, double slack = 0.01) {
  VCalibration cal;
  cal.p = p;
  cal.slack = slack;
  auto worst = [p](double t, double th) {
    const Vec a{1.0, 0.0};
    const Vec b{t * std::cos(th), t * std::sin(th)};
    if (t == 1.0 && th == 0.0) return 1.0;
    const double r = v_ratio(a, b, p);
    return std::max(r, 1.0 / r);
  };
  const int n = 400;
  double best = 1.0, bt = 0.0, bth = 0.0;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) {
      const double t = static_cast<double>(i) / n;
      const double th = M_PI * static_cast<double>(j) / n;
      const double w = worst(t, th);
      if (w > best) best = w, bt = t, bth = th;
    }
  std::mt19937_64 rng(seed);
  double step = 1.0 / n;
  for (int it = 0; it < 20000; ++it) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double t = std::clamp(bt + step * u(rng), 0.0, 1.0);
    const double th = std::clamp(bth + M_PI * step * u(rng), 0.0, M_PI);
    const double w = worst(t, th);
    if (w > best) best = w, bt = t, bth = th;
    if (it % 2000 == 1999) step *= 0.5;
  }
  cal.worst_ratio = best;
  cal.c = best * (1.0 + slack);
  return cal;
}

enum class InequalityKind { sum, convexity, monotonicity, v_equivalence };

inline const char* to_string(InequalityKind k) {
  switch (k) {
    case InequalityKind::sum: return "sum";
    case InequalityKind::convexity: return "convexity";
    case InequalityKind::monotonicity: return "monotonicity";
    case InequalityKind::v_equivalence: return "v_equivalence";
  }
  return "?";
}

struct SweepSpec {
  InequalityKind kind = InequalityKind::sum;
  double p = 2.0;
  double eps = 1.0;  // sum inequality only
  double c = 1.0;    // v_equivalence only
  std::size_t count = 100000;
  int dim = 3;
  double range = 10.0;  // components uniform in [-range, range]
  std::uint64_t seed = 1;
};

struct SweepSummary {
  SweepSpec spec;
  std::size_t evaluated = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  double min_relative_margin = std::numeric_limits<double>::infinity();
  InequalityReport witness;  // argmin of the relative margin
};

inline InequalityReport evaluate(const SweepSpec& s, const Vec& a, const Vec& b) {
  switch (s.kind) {
    case InequalityKind::sum: return check_sum_inequality(a, b, s.p, s.eps);
    case InequalityKind::convexity: return check_convexity_inequality(a, b, s.p);
    case InequalityKind::monotonicity: return check_monotonicity(a, b, s.p);
    case InequalityKind::v_equivalence: return check_v_equivalence(a, b, s.p, s.c);
  }
  throw Error("evaluate: unknown inequality");
}

// Uniform pairs, then adversarial ones: near-parallel, near-antiparallel,
// near-zero and one-vector-zero pairs (a quarter of `count` in total).
inline SweepSummary sweep(const SweepSpec& s) {
  if (s.dim < 1) throw Error("sweep: dim must be >= 1");
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> unif(-s.range, s.range);
  std::uniform_real_distribution<double> small(-1.0, 1.0);
  SweepSummary out;
  out.spec = s;
  auto draw = [&] {
    Vec v(static_cast<std::size_t>(s.dim));
    for (double& x : v) x = unif(rng);
    return v;
  };
  auto record = [&](const Vec& a, const Vec& b) {
    const bool both_zero = detail::norm(a) == 0.0 && detail::norm(b) == 0.0;
    if (both_zero) return;
    InequalityReport r = evaluate(s, a, b);
    ++out.evaluated;
    out.min_margin = std::min(out.min_margin, r.margin);
    if (r.relative_margin < out.min_relative_margin) {
      out.min_relative_margin = r.relative_margin;
      out.witness = std::move(r);
    }
  };
  const std::size_t adversarial = s.count / 4;
  for (std::size_t i = 0; i + adversarial < s.count; ++i) record(draw(), draw());
  for (std::size_t i = 0; i < adversarial; ++i) {
    Vec a = draw(), b = a;
    switch (i % 4) {
      case 0:
        for (double& x : b) x *= 1.0 + 1e-6 * small(rng);
        break;
      case 1:
        for (double& x : b) x = -x * (1.0 + 1e-6 * small(rng));
        break;
      case 2:
        for (double& x : a) x *= 1e-8;
        b = draw();
        break;
      default:
        std::fill(b.begin(), b.end(), 0.0);
        if (i % 8 == 7) std::swap(a, b);
        break;
    }
    record(a, b);
  }
  return out;
}

}  // namespace apl
