// phases.hpp
//
// Node-level phase partition {u > 0}, {u < 0}, {u = 0} and the discrete
// free-boundary taxonomy: Gamma, Gamma_0, two-phase, branching and
// nonbranching nodes. Also an exact Euclidean distance transform to node sets.
#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "apl/core.hpp"

namespace apl {

enum class Phase : std::int8_t { negative = -1, zero = 0, positive = 1 };

struct PhaseDecomposition {
  Grid grid;
  std::vector<Phase> labels;
  NodeSet positive_nodes, negative_nodes, zero_nodes;
  double zero_tol = 0.0;

  bool is(Index i, Phase ph) const { return labels[i] == ph; }
};

struct FreeBoundaryClassification {
  NodeSet gamma_all;     // Gamma(u)
  NodeSet gamma_zero;    // Gamma_0(u): |grad u| <= grad_tol
  NodeSet two_phase;     // adjacent to both signs
  NodeSet branching;     // two_phase and gamma_zero
  NodeSet nonbranching;  // two_phase minus gamma_zero
  double zero_tol = 0.0;
  double grad_tol = 0.0;
};

// Tolerances scaled to the resolvable size of a dist^(1+tau) profile one cell
// away from the free boundary.
struct PhaseTolerances {
  double zero_tol;
  double grad_tol;

  static PhaseTolerances for_grid(const Grid& g, const Params& prm, double zero_scale = 0.5,
                                  double grad_scale = 2.0) {
    const double h = g.max_spacing();
    return {zero_scale * std::pow(h, 1.0 + prm.tau()), grad_scale * std::pow(h, prm.tau())};
  }
};

inline PhaseDecomposition decompose(const ScalarField& f, double zero_tol) {
  if (!(zero_tol >= 0.0)) throw Error("decompose: zero_tol must be >= 0");
  PhaseDecomposition d;
  d.grid = f.grid();
  d.zero_tol = zero_tol;
  d.labels.resize(f.size());
  for (Index i = 0; i < f.size(); ++i) {
    if (f[i] > zero_tol) {
      d.labels[i] = Phase::positive;
      d.positive_nodes.push_back(i);
    } else if (f[i] < -zero_tol) {
      d.labels[i] = Phase::negative;
      d.negative_nodes.push_back(i);
    } else {
      d.labels[i] = Phase::zero;
      d.zero_nodes.push_back(i);
    }
  }
  return d;
}

namespace detail {

// Index offsets with L1 length <= radius, as (axis deltas).
inline std::vector<std::array<int, kMaxDim>> l1_offsets(int dim, int radius) {
  std::vector<std::array<int, kMaxDim>> out;
  const int lo = -radius, hi = radius;
  for (int a = lo; a <= hi; ++a)
    for (int b = (dim > 1 ? lo : 0); b <= (dim > 1 ? hi : 0); ++b)
      for (int c = (dim > 2 ? lo : 0); c <= (dim > 2 ? hi : 0); ++c)
        if (std::abs(a) + std::abs(b) + std::abs(c) <= radius) out.push_back({a, b, c});
  return out;
}

}  // namespace detail

// A node is on Gamma when it is a zero node with a signed face neighbor, or a
// signed node with a zero or opposite-sign face neighbor. Two-phase nodes see
// both signs within two lattice steps.
inline FreeBoundaryClassification classify(const PhaseDecomposition& d, const VectorField& grad, double grad_tol) {
  if (!(d.grid == grad.grid())) throw Error("classify: grid mismatch");
  const Grid& g = d.grid;
  FreeBoundaryClassification c;
  c.zero_tol = d.zero_tol;
  c.grad_tol = grad_tol;
  const auto offsets = detail::l1_offsets(g.dim(), 2);
  for (Index i = 0; i < g.size(); ++i) {
    const Phase ph = d.labels[i];
    bool on_gamma = false;
    g.for_each_face_neighbor(i, [&](Index j) {
      const Phase q = d.labels[j];
      if (ph == Phase::zero ? q != Phase::zero : q != ph) on_gamma = true;
    });
    if (!on_gamma) continue;
    c.gamma_all.push_back(i);
    const bool flat = grad.norm(i) <= grad_tol;
    if (flat) c.gamma_zero.push_back(i);

    const auto m = g.unflatten(i);
    bool sees_pos = false, sees_neg = false;
    for (const auto& off : offsets) {
      std::array<std::size_t, kMaxDim> mm = m;
      bool inside = true;
      for (int k = 0; k < g.dim(); ++k) {
        const long v = static_cast<long>(m[k]) + off[k];
        if (v < 0 || v >= static_cast<long>(g.n(k))) {
          inside = false;
          break;
        }
        mm[k] = static_cast<std::size_t>(v);
      }
      if (!inside) continue;
      const Phase q = d.labels[g.flatten(mm)];
      sees_pos |= q == Phase::positive;
      sees_neg |= q == Phase::negative;
    }
    if (sees_pos && sees_neg) {
      c.two_phase.push_back(i);
      (flat ? c.branching : c.nonbranching).push_back(i);
    }
  }
  return c;
}

namespace detail {

// Felzenszwalb-Huttenlocher lower envelope of parabolas along one axis.
// `f` holds squared distances (inf for no site); positions are q * h.
inline void squared_edt_1d(std::vector<double>& f, double h, std::vector<double>& out, std::vector<std::size_t>& v,
                           std::vector<double>& z) {
  const std::size_t n = f.size();
  const double inf = std::numeric_limits<double>::infinity();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  out.assign(n, inf);
  long k = -1;
  auto pos = [h](std::size_t q) { return static_cast<double>(q) * h; };
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s;
    while (true) {
      const std::size_t r = v[k];
      s = ((f[q] + pos(q) * pos(q)) - (f[r] + pos(r) * pos(r))) / (2.0 * (pos(q) - pos(r)));
      if (s > z[k] || k == 0) break;
      --k;
    }
    if (s <= z[k]) {
      // k == 0 and the new parabola dominates everywhere.
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (k < 0) return;
  long j = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[j + 1] < pos(q)) ++j;
    const double dx = pos(q) - pos(v[j]);
    out[q] = dx * dx + f[v[j]];
  }
}

}  // namespace detail

// Exact Euclidean distance from every node to the nearest node of `nodes`,
// +inf everywhere when the set is empty.
inline std::vector<double> distance_to_set(const Grid& g, const NodeSet& nodes) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> d2(g.size(), inf);
  for (Index i : nodes) d2[i] = 0.0;
  if (nodes.empty()) return d2;
  std::vector<double> line, out, z;
  std::vector<std::size_t> v;
  for (int axis = 0; axis < g.dim(); ++axis) {
    const std::size_t n = g.n(axis);
    const std::size_t stride = g.stride(axis);
    for (Index start = 0; start < g.size(); ++start) {
      if (g.unflatten(start)[axis] != 0) continue;
      line.resize(n);
      for (std::size_t q = 0; q < n; ++q) line[q] = d2[start + q * stride];
      detail::squared_edt_1d(line, g.spacing(axis), out, v, z);
      for (std::size_t q = 0; q < n; ++q) d2[start + q * stride] = out[q];
    }
  }
  for (double& x : d2) x = std::sqrt(x);
  return d2;
}

}  // namespace apl
