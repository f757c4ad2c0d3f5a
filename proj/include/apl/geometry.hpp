// geometry.hpp
//
// Measure-theoretic diagnostics on sampled fields and node sets: relative
// perimeter by contouring, phase density in balls, porosity of a node set,
// level-strip energy, coarea-averaged perimeter, Minkowski content and box
// counting dimension.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <vector>

#include "apl/core.hpp"
#include "apl/energy.hpp"
#include "apl/fit.hpp"
#include "apl/phases.hpp"

namespace apl {

struct PerimeterEstimate {
  double value = 0.0;
  bool approximate = false;  // 3D face-count estimate
};

namespace detail {

// Length of segment ab inside the closed disk (center c, radius r).
inline double clipped_length(double ax, double ay, double bx, double by, const BallSpec& ball) {
  const double dx = bx - ax, dy = by - ay;
  const double len = std::hypot(dx, dy);
  if (len == 0.0) return 0.0;
  const double fx = ax - ball.center[0], fy = ay - ball.center[1];
  const double a = dx * dx + dy * dy;
  const double b = 2.0 * (fx * dx + fy * dy);
  const double c = fx * fx + fy * fy - ball.radius * ball.radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc <= 0.0) return 0.0;
  const double sq = std::sqrt(disc);
  const double t0 = std::max(0.0, (-b - sq) / (2.0 * a));
  const double t1 = std::min(1.0, (-b + sq) / (2.0 * a));
  return t1 > t0 ? (t1 - t0) * len : 0.0;
}

}  // namespace detail

// Perimeter of {sign * u > level} inside the ball. 2D: length of the
// linearly interpolated contour (marching squares, saddles resolved by the cell
// average). 1D: number of crossings. 3D: crossing faces times face area,
// flagged approximate.
inline PerimeterEstimate relative_perimeter(const ScalarField& f, const BallSpec& ball, double level = 0.0,
                                            int sign = +1) {
  const Grid& g = f.grid();
  if (!(ball.radius > 0.0)) throw Error("relative_perimeter: radius must be > 0");
  auto phi = [&](Index i) { return sign * f[i] - level; };
  PerimeterEstimate out;
  if (g.dim() == 1) {
    const double h = g.spacing(0);
    for (Index i = 0; i + 1 < g.size(); ++i) {
      const double a = phi(i), b = phi(i + 1);
      if ((a > 0.0) == (b > 0.0)) continue;
      const double x = g.coordinate(i, 0) + h * a / (a - b);
      if (std::abs(x - ball.center[0]) <= ball.radius * (1.0 + 1e-12)) out.value += 1.0;
    }
    return out;
  }
  if (g.dim() == 3) {
    out.approximate = true;
    for (Index i = 0; i < g.size(); ++i) {
      const auto m = g.unflatten(i);
      for (int k = 0; k < 3; ++k) {
        if (m[k] + 1 >= g.n(k)) continue;
        const Index j = i + g.stride(k);
        const double a = phi(i), b = phi(j);
        if ((a > 0.0) == (b > 0.0)) continue;
        Point x = g.point(i);
        x[k] += g.spacing(k) * a / (a - b);
        if (distance(x, ball.center, 3) > ball.radius) continue;
        out.value += g.cell_volume() / g.spacing(k);
      }
    }
    return out;
  }
  // 2D marching squares.
  const double hx = g.spacing(0), hy = g.spacing(1);
  for (std::size_t ix = 0; ix + 1 < g.n(0); ++ix) {
    for (std::size_t iy = 0; iy + 1 < g.n(1); ++iy) {
      // Corners counter-clockwise: (0,0), (1,0), (1,1), (0,1).
      const std::array<Index, 4> id = {g.flatten({ix, iy, 0}), g.flatten({ix + 1, iy, 0}),
                                       g.flatten({ix + 1, iy + 1, 0}), g.flatten({ix, iy + 1, 0})};
      const std::array<double, 4> v = {phi(id[0]), phi(id[1]), phi(id[2]), phi(id[3])};
      const std::array<bool, 4> in = {v[0] > 0.0, v[1] > 0.0, v[2] > 0.0, v[3] > 0.0};
      if (in[0] == in[1] && in[1] == in[2] && in[2] == in[3]) continue;
      const double x0 = g.coordinate(ix, 0), y0 = g.coordinate(iy, 1);
      const std::array<std::array<double, 2>, 4> cp = {
          {{x0, y0}, {x0 + hx, y0}, {x0 + hx, y0 + hy}, {x0, y0 + hy}}};
      // Crossing on edge e between corner e and corner e+1.
      std::array<std::array<double, 2>, 4> xp{};
      std::array<bool, 4> cut{};
      for (int e = 0; e < 4; ++e) {
        const int a = e, b = (e + 1) % 4;
        cut[e] = in[a] != in[b];
        if (!cut[e]) continue;
        const double t = v[a] / (v[a] - v[b]);
        xp[e] = {cp[a][0] + t * (cp[b][0] - cp[a][0]), cp[a][1] + t * (cp[b][1] - cp[a][1])};
      }
      auto add = [&](int e1, int e2) {
        out.value += detail::clipped_length(xp[e1][0], xp[e1][1], xp[e2][0], xp[e2][1], ball);
      };
      const int ncut = cut[0] + cut[1] + cut[2] + cut[3];
      if (ncut == 2) {
        int e1 = -1, e2 = -1;
        for (int e = 0; e < 4; ++e)
          if (cut[e]) (e1 < 0 ? e1 : e2) = e;
        add(e1, e2);
      } else {
        // Saddle: isolate the corners whose state differs from the cell average.
        const bool center_in = 0.25 * (v[0] + v[1] + v[2] + v[3]) > 0.0;
        for (int c = 0; c < 4; ++c)
          if (in[c] != center_in) add((c + 3) % 4, c);  // edges entering and leaving corner c
      }
    }
  }
  return out;
}

// (phase nodes in ball * cell volume) / ball volume, clamped to [0, 1].
inline double phase_density(const PhaseDecomposition& d, const BallSpec& ball, Phase phase) {
  if (!(ball.radius > 0.0)) throw Error("phase_density: zero-radius ball");
  const Grid& g = d.grid;
  std::size_t count = 0;
  for (Index i = 0; i < g.size(); ++i)
    if (d.labels[i] == phase && in_ball(g, i, ball)) ++count;
  const double dens = static_cast<double>(count) * g.cell_volume() / ball_volume(ball.radius, g.dim());
  return std::clamp(dens, 0.0, 1.0);
}

// Largest kappa <= 1 such that some B_{kappa r}(y) inside B_r(z) avoids the set,
// maximized over node centers y. `dist` is distance_to_set(grid, set).
inline double porosity_constant(const Grid& g, const NodeSet& set, const std::vector<double>& dist,
                                const BallSpec& ball) {
  if (!(ball.radius > 0.0)) throw Error("porosity_constant: radius must be > 0");
  const bool hits = std::any_of(set.begin(), set.end(), [&](Index i) { return in_ball(g, i, ball); });
  if (!hits) return 1.0;
  double best = 0.0;
  for (Index i = 0; i < g.size(); ++i) {
    if (!in_ball(g, i, ball)) continue;
    const double room = ball.radius - distance(g.point(i), ball.center, g.dim());
    best = std::max(best, std::min(dist[i], room));
  }
  return std::clamp(best / ball.radius, 0.0, 1.0);
}

inline double porosity_constant(const Grid& g, const NodeSet& set, const BallSpec& ball) {
  return porosity_constant(g, set, distance_to_set(g, set), ball);
}

// Energy of the nodes in the ball with lower < |u| < eps.
inline double level_strip_energy(const ScalarField& f, const Params& prm, double eps, const BallSpec& ball,
                                 double lower = 0.0) {
  if (!(eps > 0.0)) throw Error("level_strip_energy: eps must be > 0");
  const Grid& g = f.grid();
  NodeMask strip(g.size(), 0);
  bool any = false;
  for (Index i = 0; i < g.size(); ++i) {
    const double a = std::abs(f[i]);
    if (a > lower && a < eps && in_ball(g, i, ball)) {
      strip[i] = 1;
      any = true;
    }
  }
  if (!any) return 0.0;
  return total_energy(f, prm, Regularization{}, strip);
}

struct StripLadder {
  std::vector<double> eps;
  std::vector<double> energy;
  std::optional<FitResult> fit;  // log E against log eps
};

inline StripLadder level_strip_ladder(const ScalarField& f, const Params& prm, const std::vector<double>& eps,
                                      const BallSpec& ball, double lower = 0.0) {
  StripLadder out;
  out.eps = eps;
  for (double e : eps) out.energy.push_back(level_strip_energy(f, prm, e, ball, lower));
  std::size_t positive = std::count_if(out.energy.begin(), out.energy.end(), [](double v) { return v > 0.0; });
  if (positive >= 2) out.fit = fit_log_log(out.eps, out.energy);
  return out;
}

// (1/eps) int_0^eps Per({u > s}, B) ds by the midpoint rule on `samples` levels.
inline double coarea_average_perimeter(const ScalarField& f, double eps, const BallSpec& ball,
                                       std::size_t samples = 16) {
  if (f.grid().dim() == 3) throw Error("coarea_average_perimeter: unsupported dimension");
  if (!(eps > 0.0)) throw Error("coarea_average_perimeter: eps must be > 0");
  if (samples == 0) throw Error("coarea_average_perimeter: need at least one level");
  double acc = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    const double s = (static_cast<double>(k) + 0.5) * eps / static_cast<double>(samples);
    acc += relative_perimeter(f, ball, s).value;
  }
  return acc / static_cast<double>(samples);
}

struct MinkowskiResult {
  std::vector<double> eps;
  std::vector<double> tube_measure;
  std::vector<double> content;  // tube / (2 eps)
  std::optional<FitResult> fit;  // log tube against log eps
};

// Tube measure |{dist(., set) < eps} cap region| with each node counted by the
// fraction of its cell (width h) lying within eps, which is exact for
// axis-aligned hyperplanes.
inline MinkowskiResult minkowski_content(const Grid& g, const NodeSet& set, const std::vector<double>& eps,
                                         const NodeMask& region) {
  if (region.size() != g.size()) throw Error("minkowski_content: region does not match grid");
  const double h = g.max_spacing();
  for (std::size_t k = 0; k < eps.size(); ++k) {
    if (eps[k] < 2.0 * h * (1.0 - 1e-12)) throw Error("minkowski_content: ladder enters sub-grid scales");
    if (k > 0 && !(eps[k] < eps[k - 1])) throw Error("minkowski_content: ladder must be decreasing");
  }
  MinkowskiResult out;
  out.eps = eps;
  const auto dist = set.empty() ? std::vector<double>() : distance_to_set(g, set);
  for (double e : eps) {
    double m = 0.0;
    if (!set.empty())
      for (Index i = 0; i < g.size(); ++i)
        if (region[i]) m += g.cell_volume() * std::clamp((e - dist[i]) / h + 0.5, 0.0, 1.0);
    out.tube_measure.push_back(m);
    out.content.push_back(m / (2.0 * e));
  }
  std::size_t positive =
      std::count_if(out.tube_measure.begin(), out.tube_measure.end(), [](double v) { return v > 0.0; });
  if (positive >= 2) out.fit = fit_log_log(out.eps, out.tube_measure);
  return out;
}

// Least-squares slope of log(box count) against log(1/scale); boxes are
// aligned with the lower domain corner.
inline FitResult box_dimension(const Grid& g, const NodeSet& set, const std::vector<double>& scales) {
  if (scales.size() < 3) throw Error("box_dimension: fewer than 3 scales");
  const double h = g.max_spacing();
  for (double s : scales)
    if (s < 2.0 * h * (1.0 - 1e-12) || s > 0.25 * g.domain_size() * (1.0 + 1e-12))
      throw Error("box_dimension: scale outside [2h, domain/4]");
  if (set.empty()) throw Error("box_dimension: empty set");
  std::vector<double> inv, counts;
  for (double s : scales) {
    std::set<std::array<long, kMaxDim>> boxes;
    for (Index i : set) {
      const Point x = g.point(i);
      std::array<long, kMaxDim> b{0, 0, 0};
      for (int k = 0; k < g.dim(); ++k) {
        // The closed upper face belongs to the last box.
        const long last = static_cast<long>(std::ceil((g.upper(k) - g.lower(k)) / s - 1e-9)) - 1;
        b[k] = std::min(last, static_cast<long>(std::floor((x[k] - g.lower(k)) / s + 1e-9)));
      }
      boxes.insert(b);
    }
    inv.push_back(1.0 / s);
    counts.push_back(static_cast<double>(boxes.size()));
  }
  return fit_log_log(inv, counts);
}

}  // namespace apl
