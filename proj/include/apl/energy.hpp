// energy.hpp
//
// The two-phase potential F_gamma, its C^1 smoothing, and the discrete
// functional
//
//   J_delta[u] = sum_nodes w_node * ( |grad u|^p / p  +  delta * F_gamma(u) )
//
// with trapezoidal node weights. The gradient term of a node is the average
// of its corner gradients: every cell contributes one corner per vertex, whose
// gradient uses the N cell edges meeting at that vertex. This is the node form
// of the cell-wise quadrature, has no checkerboard null space, and reduces to
// the usual edge differences in 1D.
#pragma once

#include <array>
#include <cmath>
#include <optional>

#include "apl/core.hpp"

namespace apl {

struct Regularization {
  double eps_pot = 0.0;   // smoothing of |v|^gamma near v = 0
  double eps_grad = 0.0;  // smoothing of |grad u|^(p-2) near grad u = 0

  void validate() const {
    if (!(eps_pot >= 0.0) || !(eps_grad >= 0.0)) throw Error("Regularization: eps values must be >= 0");
  }
  friend bool operator==(const Regularization&, const Regularization&) = default;
};

// ---------------------------------------------------------------------------
// Potential
// ---------------------------------------------------------------------------

inline double potential_value(double v, const Params& prm) {
  if (v > 0.0) return prm.lambda_plus() * std::pow(v, prm.gamma());
  if (v < 0.0) return prm.lambda_minus() * std::pow(-v, prm.gamma());
  return 0.0;
}

// lambda_+((v_+^2 + eps^2)^(gamma/2) - eps^gamma) + lambda_- analog.
inline double smoothed_potential(double v, const Params& prm, double eps) {
  if (eps == 0.0) return potential_value(v, prm);
  const double g = prm.gamma();
  const double base = std::pow(eps, g);
  if (v > 0.0) return prm.lambda_plus() * (std::pow(v * v + eps * eps, 0.5 * g) - base);
  if (v < 0.0) return prm.lambda_minus() * (std::pow(v * v + eps * eps, 0.5 * g) - base);
  return 0.0;
}

inline double potential_derivative(double v, const Params& prm, const Regularization& reg = {}) {
  if (v == 0.0) return 0.0;
  const double g = prm.gamma();
  const double lam = v > 0.0 ? prm.lambda_plus() : prm.lambda_minus();
  const double a = std::abs(v);
  double d;
  if (reg.eps_pot == 0.0) {
    d = g * lam * std::pow(a, g - 1.0);
  } else {
    const double e2 = reg.eps_pot * reg.eps_pot;
    d = g * lam * a * std::pow(a * a + e2, 0.5 * g - 1.0);
  }
  return v > 0.0 ? d : -d;
}

// Second derivative of the (smoothed) potential. At v = 0 the one-sided values
// may differ; the larger one is returned. Without smoothing the value at 0 is
// reported as 0.
inline double potential_second_derivative(double v, const Params& prm, const Regularization& reg = {}) {
  const double g = prm.gamma();
  const double e2 = reg.eps_pot * reg.eps_pot;
  if (v == 0.0) {
    if (reg.eps_pot == 0.0) return 0.0;
    return g * std::max(prm.lambda_plus(), prm.lambda_minus()) * std::pow(e2, 0.5 * g - 1.0);
  }
  const double lam = v > 0.0 ? prm.lambda_plus() : prm.lambda_minus();
  const double a2 = v * v;
  if (reg.eps_pot == 0.0) return g * (g - 1.0) * lam * std::pow(a2, 0.5 * g - 1.0);
  return g * lam * std::pow(a2 + e2, 0.5 * g - 2.0) * (e2 + (g - 1.0) * a2);
}

// ---------------------------------------------------------------------------
// Gradient density
// ---------------------------------------------------------------------------

namespace detail {

// ((|g|^2 + eps^2)^(p/2) - eps^p) / p
inline double gradient_density(double g2, double p, double eps) {
  if (eps == 0.0) return std::pow(g2, 0.5 * p) / p;
  return (std::pow(g2 + eps * eps, 0.5 * p) - std::pow(eps, p)) / p;
}

// (|g|^2 + eps^2)^((p-2)/2), the flux coefficient.
inline double flux_coefficient(double g2, double p, double eps) {
  if (p == 2.0) return 1.0;
  const double s = g2 + eps * eps;
  if (s == 0.0) {
    if (p > 2.0) return 0.0;
    throw Error("energy: p < 2 with eps_grad = 0 at a zero-gradient corner");
  }
  return std::pow(s, 0.5 * (p - 2.0));
}

// d(flux_coefficient)/d(|g|^2) * 2, so that the Hessian of the density in g is
// a I + b g g^T.
inline double flux_coefficient_slope(double g2, double p, double eps) {
  if (p == 2.0) return 0.0;
  const double s = g2 + eps * eps;
  if (s == 0.0) return 0.0;
  return (p - 2.0) * std::pow(s, 0.5 * (p - 4.0));
}

struct Corner {
  Index node;
  std::array<Index, kMaxDim> partner;
  std::array<double, kMaxDim> coef;  // g_k = coef_k * (u[partner_k] - u[node])
  double weight;                      // cell volume / 2^N
};

inline std::size_t cell_count(const Grid& g) {
  std::size_t c = 1;
  for (int k = 0; k < g.dim(); ++k) c *= g.n(k) - 1;
  return c;
}

// Lower-corner node of cell c.
inline Index cell_origin(const Grid& g, std::size_t c) {
  std::array<std::size_t, kMaxDim> m{0, 0, 0};
  for (int k = g.dim() - 1; k >= 0; --k) {
    const std::size_t nk = g.n(k) - 1;
    m[k] = c % nk;
    c /= nk;
  }
  return g.flatten(m);
}

// Visits the 2^N corners of cell c.
template <class Fn>
void for_each_corner_of_cell(const Grid& g, std::size_t c, Fn&& fn) {
  const Index origin = cell_origin(g, c);
  const int dim = g.dim();
  const double w = g.cell_volume() / static_cast<double>(1 << dim);
  for (int bits = 0; bits < (1 << dim); ++bits) {
    Corner cn;
    cn.node = origin;
    for (int k = 0; k < dim; ++k)
      if (bits & (1 << k)) cn.node += g.stride(k);
    for (int k = 0; k < dim; ++k) {
      const double inv_h = 1.0 / g.spacing(k);
      if (bits & (1 << k)) {
        cn.partner[k] = cn.node - g.stride(k);
        cn.coef[k] = -inv_h;
      } else {
        cn.partner[k] = cn.node + g.stride(k);
        cn.coef[k] = inv_h;
      }
    }
    cn.weight = w;
    fn(cn);
  }
}

inline double corner_gradient_sq(const Corner& cn, const std::vector<double>& u, int dim,
                                 std::array<double, kMaxDim>* grad = nullptr) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) {
    const double gk = cn.coef[k] * (u[cn.partner[k]] - u[cn.node]);
    if (grad) (*grad)[k] = gk;
    s += gk * gk;
  }
  return s;
}

}  // namespace detail

// Sum over region nodes of the weighted corner densities |g|^p/p only.
inline double dirichlet_energy(const ScalarField& f, double p, double eps_grad, const NodeMask& region) {
  const Grid& g = f.grid();
  const auto& u = f.values();
  return chunked_sum(detail::cell_count(g), [&](std::size_t c) {
    double s = 0.0;
    detail::for_each_corner_of_cell(g, c, [&](const detail::Corner& cn) {
      if (!region[cn.node]) return;
      s += cn.weight * detail::gradient_density(detail::corner_gradient_sq(cn, u, g.dim()), p, eps_grad);
    });
    return s;
  });
}

// Discrete J_delta restricted to nodes in `region`. With reg = {} this is the
// unsmoothed functional.
inline double total_energy(const ScalarField& f, const Params& prm, const Regularization& reg,
                           const NodeMask& region) {
  const Grid& g = f.grid();
  if (region.size() != g.size()) throw Error("total_energy: region does not match grid");
  if (std::none_of(region.begin(), region.end(), [](std::uint8_t m) { return m != 0; }))
    throw Error("total_energy: empty region");
  const auto& u = f.values();
  const double grad_part = dirichlet_energy(f, prm.p(), reg.eps_grad, region);
  const double pot_part =
      prm.delta() == 0.0 ? 0.0 : chunked_sum(g.size(), [&](std::size_t i) {
        return region[i] ? g.weight(i) * smoothed_potential(u[i], prm, reg.eps_pot) : 0.0;
      });
  return grad_part + prm.delta() * pot_part;
}

inline double total_energy(const ScalarField& f, const Params& prm, const Regularization& reg = {}) {
  return total_energy(f, prm, reg, full_mask(f.grid()));
}

// dJ/du at every node of the full-domain functional (masked nodes included).
inline std::vector<double> raw_energy_gradient(const ScalarField& f, const Params& prm, const Regularization& reg) {
  const Grid& g = f.grid();
  const auto& u = f.values();
  std::vector<double> grad(g.size(), 0.0);
  const std::size_t cells = detail::cell_count(g);
  const double p = prm.p();
  for (std::size_t c = 0; c < cells; ++c) {
    detail::for_each_corner_of_cell(g, c, [&](const detail::Corner& cn) {
      std::array<double, kMaxDim> gk{};
      const double g2 = detail::corner_gradient_sq(cn, u, g.dim(), &gk);
      if (g2 == 0.0 && reg.eps_grad == 0.0) return;  // flux |g|^(p-2) g vanishes for every p > 1
      const double a = detail::flux_coefficient(g2, p, reg.eps_grad);
      for (int k = 0; k < g.dim(); ++k) {
        const double t = cn.weight * a * gk[k] * cn.coef[k];
        grad[cn.partner[k]] += t;
        grad[cn.node] -= t;
      }
    });
  }
  if (prm.delta() != 0.0)
    for (Index i = 0; i < g.size(); ++i) grad[i] += g.weight(i) * prm.delta() * potential_derivative(u[i], prm, reg);
  return grad;
}

// First variation of the discrete J_delta; zero at masked nodes.
inline ScalarField energy_gradient(const ScalarField& f, const Params& prm, const Regularization& reg = {}) {
  reg.validate();
  auto grad = raw_energy_gradient(f, prm, reg);
  for (Index i = 0; i < f.size(); ++i)
    if (f.masked(i)) grad[i] = 0.0;
  return ScalarField(f.grid(), std::move(grad));
}

// Default activity threshold 10 h^(1+tau).
inline double default_activity_threshold(const Grid& g, const Params& prm) {
  return 10.0 * std::pow(g.max_spacing(), 1.0 + prm.tau());
}

// max |discrete Delta_p u - delta F'(u)| over unmasked nodes with |u| above the
// activity threshold. The pointwise residual of node i is |dJ/du_i| / w_i.
inline double el_residual(const ScalarField& f, const Params& prm, const Regularization& reg = {},
                          std::optional<double> threshold = std::nullopt) {
  reg.validate();
  const Grid& g = f.grid();
  const double thr = threshold.value_or(default_activity_threshold(g, prm));
  const auto grad = raw_energy_gradient(f, prm, reg);
  double r = 0.0;
  for (Index i = 0; i < g.size(); ++i) {
    if (f.masked(i) || g.on_boundary(i)) continue;
    if (!(std::abs(f[i]) > thr)) continue;
    r = std::max(r, std::abs(grad[i]) / g.weight(i));
  }
  return r;
}

}  // namespace apl
