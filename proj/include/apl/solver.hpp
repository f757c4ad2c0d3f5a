// solver.hpp
//
// Minimization of the discrete J_delta by regularization continuation. Each
// stage smooths the potential and the flux with a fixed (eps_pot, eps_grad)
// pair and runs preconditioned descent with Armijo backtracking, warm-started
// from the previous stage.
//
// The default preconditioner is the linearized operator (the Hessian of the
// smoothed energy). Where it is indefinite (concave potential, gamma < 1) the
// negative part of the potential curvature is dropped, which keeps the
// direction a descent direction. A purely diagonal preconditioner is available
// for comparison but converges slowly on fine grids.
//
// Also here: p-harmonic replacement on a ball and the two comparison
// diagnostics that go with it.
#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <string>
#include <vector>

#include "apl/core.hpp"
#include "apl/energy.hpp"

namespace apl {

enum class Preconditioner { linearized, diagonal };

// eps ladder 1e-1 -> 1e-5 in half-decade steps; both smoothings move together.
inline std::vector<Regularization> default_schedule(double start = 1e-1, double stop = 1e-5,
                                                    int steps_per_decade = 2) {
  std::vector<Regularization> s;
  const double ls = std::log10(start), le = std::log10(stop);
  const int steps = static_cast<int>(std::lround((ls - le) * steps_per_decade));
  for (int k = 0; k <= steps; ++k) {
    const double e = std::pow(10.0, ls - static_cast<double>(k) / steps_per_decade);
    s.push_back({e, e});
  }
  return s;
}

struct SolverConfig {
  std::vector<Regularization> schedule = default_schedule();
  int max_iters = 200;  // per stage
  double tol_energy = 1e-14;
  double tol_residual = 1e-8;
  double armijo_c1 = 1e-4;
  double backtrack = 0.5;
  double step_floor = 1e-14;
  bool deterministic = true;
  Preconditioner preconditioner = Preconditioner::linearized;
  bool relocate = true;      // free-boundary restarts for gamma < 1
  int max_relocations = 40;  // re-solves spent on them

  void validate() const {
    if (schedule.empty()) throw Error("SolverConfig: empty continuation schedule");
    for (std::size_t k = 0; k < schedule.size(); ++k) {
      schedule[k].validate();
      if (k > 0) {
        const auto& a = schedule[k - 1];
        const auto& b = schedule[k];
        if (b.eps_pot > a.eps_pot || b.eps_grad > a.eps_grad || b == a)
          throw Error("SolverConfig: continuation schedule must be strictly decreasing");
      }
    }
    if (max_iters < 1) throw Error("SolverConfig: max_iters must be >= 1");
    if (!(tol_energy > 0.0) || !(tol_residual > 0.0)) throw Error("SolverConfig: tolerances must be > 0");
    if (!(armijo_c1 > 0.0 && armijo_c1 < 1.0)) throw Error("SolverConfig: armijo_c1 must lie in (0, 1)");
    if (!(backtrack > 0.0 && backtrack < 1.0)) throw Error("SolverConfig: backtrack must lie in (0, 1)");
    if (!(step_floor > 0.0)) throw Error("SolverConfig: step_floor must be > 0");
    if (max_relocations < 0) throw Error("SolverConfig: max_relocations must be >= 0");
  }
};

enum class StageExit { converged, stagnated, max_iters, stalled };

inline const char* to_string(StageExit e) {
  switch (e) {
    case StageExit::converged: return "converged";
    case StageExit::stagnated: return "stagnated";
    case StageExit::max_iters: return "max_iters";
    case StageExit::stalled: return "stalled";
  }
  return "?";
}

struct StageRecord {
  Regularization reg;
  int iterations = 0;
  double energy_start = 0.0;
  double energy_end = 0.0;
  double residual = 0.0;
  int indefinite_steps = 0;  // steps where the full Hessian was not usable
  StageExit exit = StageExit::max_iters;
};

enum class SolveStatus { converged, max_iters, stalled };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iters: return "max_iters";
    case SolveStatus::stalled: return "stalled";
  }
  return "?";
}

struct SolveResult {
  ScalarField field;
  std::vector<double> energy_trace;  // one entry per accepted iterate (plus stage starts)
  std::vector<int> trace_stage;      // stage index of each trace entry
  double final_residual = 0.0;
  std::vector<StageRecord> stages;
  int iterations = 0;
  SolveStatus status = SolveStatus::max_iters;
  std::string message;
  double initial_energy = 0.0;  // both at the final regularization
  double final_energy = 0.0;
  int relocation_trials = 0;
  int relocations_accepted = 0;
};

namespace detail {

// Residual max |dJ/du_i| / w_i over free nodes.
inline double free_residual(const Grid& g, const std::vector<double>& grad, const std::vector<Index>& free) {
  double r = 0.0;
  for (Index i : free) r = std::max(r, std::abs(grad[i]) / g.weight(i));
  return r;
}

class NewtonSystem {
 public:
  NewtonSystem(const ScalarField& f) : grid_(f.grid()), slot_(f.size(), -1) {
    for (Index i = 0; i < f.size(); ++i)
      if (!f.masked(i)) {
        slot_[i] = static_cast<long>(free_.size());
        free_.push_back(i);
      }
  }

  const std::vector<Index>& free_nodes() const { return free_; }

  // Assembles the gradient-term Hessian and the potential curvature diagonal.
  void assemble(const std::vector<double>& u, const Params& prm, const Regularization& reg) {
    const int dim = grid_.dim();
    const double p = prm.p();
    triplets_.clear();
    const std::size_t cells = cell_count(grid_);
    triplets_.reserve(cells * (1u << dim) * (dim + 1) * (dim + 1));
    for (std::size_t c = 0; c < cells; ++c) {
      for_each_corner_of_cell(grid_, c, [&](const Corner& cn) {
        std::array<double, kMaxDim> gk{};
        const double g2 = corner_gradient_sq(cn, u, dim, &gk);
        const double a = flux_coefficient(g2, p, reg.eps_grad);
        const double b = flux_coefficient_slope(g2, p, reg.eps_grad);
        // Local derivative matrix D (dim x (dim+1)): column 0 is the corner
        // node, column k+1 the partner on axis k.
        std::array<Index, kMaxDim + 1> nodes{};
        nodes[0] = cn.node;
        for (int k = 0; k < dim; ++k) nodes[k + 1] = cn.partner[k];
        auto D = [&](int k, int col) -> double {
          if (col == 0) return -cn.coef[k];
          return col == k + 1 ? cn.coef[k] : 0.0;
        };
        for (int r = 0; r <= dim; ++r) {
          const long sr = slot_[nodes[r]];
          if (sr < 0) continue;
          for (int s = 0; s <= dim; ++s) {
            const long ss = slot_[nodes[s]];
            if (ss < 0) continue;
            // (D^T (a I + b g g^T) D)_{rs}
            double dr_ds = 0.0, gdr = 0.0, gds = 0.0;
            for (int k = 0; k < dim; ++k) {
              dr_ds += D(k, r) * D(k, s);
              gdr += gk[k] * D(k, r);
              gds += gk[k] * D(k, s);
            }
            const double v = cn.weight * (a * dr_ds + b * gdr * gds);
            triplets_.emplace_back(sr, ss, v);  // zeros kept: the sparsity pattern stays fixed
          }
        }
      });
    }
    curvature_.assign(free_.size(), 0.0);
    if (prm.delta() != 0.0)
      for (std::size_t k = 0; k < free_.size(); ++k) {
        const Index i = free_[k];
        curvature_[k] = grid_.weight(i) * prm.delta() * potential_second_derivative(u[i], prm, reg);
      }
  }

  // Solves H d = -grad on the free nodes. Returns false if no usable direction.
  bool newton_direction(const std::vector<double>& grad, std::vector<double>& dir, bool& indefinite) {
    const auto n = static_cast<Eigen::Index>(free_.size());
    Eigen::VectorXd rhs(n);
    for (Eigen::Index k = 0; k < n; ++k) rhs[k] = -grad[free_[k]];

    auto attempt = [&](bool clip) -> bool {
      Eigen::SparseMatrix<double> H(n, n);
      H.setFromTriplets(triplets_.begin(), triplets_.end());
      double max_diag = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) max_diag = std::max(max_diag, std::abs(H.coeff(k, k)));
      std::vector<Eigen::Triplet<double>> diag;
      diag.reserve(n);
      for (Eigen::Index k = 0; k < n; ++k) {
        double c = curvature_[k];
        if (clip) c = std::max(c, 0.0);
        max_diag = std::max(max_diag, std::abs(c));
        diag.emplace_back(k, k, c);
      }
      for (Eigen::Index k = 0; k < n && clip; ++k) diag.emplace_back(k, k, 1e-12 * std::max(max_diag, 1e-300));
      Eigen::SparseMatrix<double> C(n, n);
      C.setFromTriplets(diag.begin(), diag.end());
      H += C;
      if (!analyzed_) {
        ldlt_.analyzePattern(H);
        analyzed_ = true;
      }
      ldlt_.factorize(H);
      if (ldlt_.info() != Eigen::Success) return false;
      if (!(ldlt_.vectorD().minCoeff() > 0.0)) return false;
      Eigen::VectorXd d = ldlt_.solve(rhs);
      if (ldlt_.info() != Eigen::Success || !d.allFinite()) return false;
      if (!(d.dot(rhs) > 0.0)) return false;
      dir.assign(grid_.size(), 0.0);
      for (Eigen::Index k = 0; k < n; ++k) dir[free_[k]] = d[k];
      return true;
    };

    indefinite = false;
    if (attempt(false)) return true;
    indefinite = true;
    return attempt(true);
  }

  // Jacobi-preconditioned steepest descent direction.
  void diagonal_direction(const std::vector<double>& grad, std::vector<double>& dir) const {
    std::vector<double> diag(free_.size(), 0.0);
    for (const auto& t : triplets_)
      if (t.row() == t.col()) diag[t.row()] += t.value();
    dir.assign(grid_.size(), 0.0);
    for (std::size_t k = 0; k < free_.size(); ++k) {
      const double dk = diag[k] + std::max(curvature_[k], 0.0);
      dir[free_[k]] = dk > 0.0 ? -grad[free_[k]] / dk : -grad[free_[k]];
    }
  }

 private:
  Grid grid_;
  std::vector<long> slot_;
  std::vector<Index> free_;
  std::vector<Eigen::Triplet<double>> triplets_;
  std::vector<double> curvature_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  bool analyzed_ = false;
};

}  // namespace detail

// Minimizes J_delta over fields sharing `initial`'s Dirichlet mask. Masked
// values are never modified. A line-search failure is reported through
// status == stalled together with the partial result.
namespace detail {
inline void relocate_free_boundary(SolveResult& res, const Params& prm, const SolverConfig& cfg);
}

inline SolveResult minimize(const ScalarField& initial, const Params& prm, const SolverConfig& cfg) {
  cfg.validate();
  initial.check_finite();
  for (Index i = 0; i < initial.size(); ++i)
    if (initial.masked(i) && initial[i] != initial.boundary_value(i))
      throw Error("minimize: initial field violates its boundary mask");

  const Grid& g = initial.grid();
  SolveResult res;
  res.field = initial;
  auto& u = res.field.values();
  const NodeMask all = full_mask(g);
  detail::NewtonSystem system(initial);
  const auto& free = system.free_nodes();
  res.status = SolveStatus::converged;

  if (free.empty()) {
    res.initial_energy = res.final_energy = total_energy(res.field, prm, cfg.schedule.back(), all);
    res.energy_trace.push_back(res.final_energy);
    res.trace_stage.push_back(0);
    res.message = "no free nodes";
    return res;
  }

  std::vector<double> dir, trial(u.size());
  for (std::size_t s = 0; s < cfg.schedule.size(); ++s) {
    const Regularization& reg = cfg.schedule[s];
    StageRecord rec;
    rec.reg = reg;
    double E = total_energy(res.field, prm, reg, all);
    rec.energy_start = E;
    res.energy_trace.push_back(E);
    res.trace_stage.push_back(static_cast<int>(s));
    rec.exit = StageExit::max_iters;
    for (int it = 0; it < cfg.max_iters; ++it) {
      auto grad = raw_energy_gradient(res.field, prm, reg);
      rec.residual = detail::free_residual(g, grad, free);
      if (rec.residual <= cfg.tol_residual) {
        rec.exit = StageExit::converged;
        break;
      }
      system.assemble(u, prm, reg);
      bool indefinite = false;
      bool have_dir = false;
      if (cfg.preconditioner == Preconditioner::linearized) have_dir = system.newton_direction(grad, dir, indefinite);
      if (!have_dir) system.diagonal_direction(grad, dir);
      if (indefinite) ++rec.indefinite_steps;
      double slope = 0.0;
      for (Index i : free) slope += grad[i] * dir[i];

      double t = 1.0;
      double E_new = E;
      bool accepted = false;
      while (t >= cfg.step_floor) {
        for (Index i = 0; i < u.size(); ++i) trial[i] = u[i] + t * dir[i];
        ScalarField candidate(g, trial);
        E_new = total_energy(candidate, prm, reg, all);
        if (std::isfinite(E_new) && E_new <= E + cfg.armijo_c1 * t * slope) {
          accepted = true;
          break;
        }
        t *= cfg.backtrack;
      }
      if (!accepted) {
        // A predicted decrease at the level of rounding is convergence, not a stall.
        if (-slope <= 1e-12 * std::max(1.0, std::abs(E))) {
          rec.exit = StageExit::stagnated;
        } else {
          rec.exit = StageExit::stalled;
          res.status = SolveStatus::stalled;
          res.message = "line search failed in stage " + std::to_string(s) + " at iteration " + std::to_string(it) +
                        " (directional derivative " + std::to_string(slope) + ")";
        }
        break;
      }
      for (Index i : free) u[i] = trial[i];
      ++rec.iterations;
      ++res.iterations;
      const double decrease = E - E_new;
      E = E_new;
      res.energy_trace.push_back(E);
      res.trace_stage.push_back(static_cast<int>(s));
      if (decrease <= cfg.tol_energy * std::max(1.0, std::abs(E))) {
        rec.residual = detail::free_residual(g, raw_energy_gradient(res.field, prm, reg), free);
        rec.exit = rec.residual <= cfg.tol_residual ? StageExit::converged : StageExit::stagnated;
        break;
      }
    }
    if (rec.exit == StageExit::max_iters)
      rec.residual = detail::free_residual(g, raw_energy_gradient(res.field, prm, reg), free);
    rec.energy_end = E;
    res.stages.push_back(rec);
    if (rec.exit == StageExit::stalled) break;
  }

  const Regularization& last = res.stages.back().reg;
  res.final_residual = res.stages.back().residual;
  res.final_energy = total_energy(res.field, prm, last, all);
  res.initial_energy = total_energy(initial, prm, last, all);
  if (res.status != SolveStatus::stalled) {
    const StageExit e = res.stages.back().exit;
    res.status = (e == StageExit::converged || e == StageExit::stagnated) ? SolveStatus::converged
                                                                          : SolveStatus::max_iters;
    res.message = std::string("final stage ") + to_string(e);
  }
  res.field.enforce_mask();
  if (cfg.relocate && res.status == SolveStatus::converged && prm.gamma() < 1.0 && prm.delta() > 0.0)
    detail::relocate_free_boundary(res, prm, cfg);
  return res;
}

namespace detail {

// For gamma < 1 the potential has a cusp at 0 and the discrete problem has a
// family of local minimizers whose free boundary is pinned with a gradient kink
// a few cells off. Zero every free node with |u| below a threshold, re-solve at
// the final regularization and keep the result if the energy drops. The
// threshold starts at h^(1+tau), doubles after a success and halves after a
// failure.
inline void relocate_free_boundary(SolveResult& res, const Params& prm, const SolverConfig& cfg) {
  const Grid& g = res.field.grid();
  SolverConfig local = cfg;
  local.schedule = {cfg.schedule.back()};
  local.relocate = false;
  const double floor = std::pow(g.max_spacing(), 1.0 + prm.tau());
  double sup = 0.0;
  for (Index i = 0; i < g.size(); ++i)
    if (!res.field.masked(i)) sup = std::max(sup, std::abs(res.field[i]));
  double th = floor;
  bool growing = true;
  while (th >= floor && th < sup && res.relocation_trials < cfg.max_relocations) {
    ScalarField trial = res.field;
    bool changed = false;
    for (Index i = 0; i < g.size(); ++i)
      if (!trial.masked(i) && trial[i] != 0.0 && std::abs(trial[i]) < th) {
        trial[i] = 0.0;
        changed = true;
      }
    if (!changed) {
      if (!growing) break;
      th *= 2.0;
      continue;
    }
    SolveResult r = minimize(trial, prm, local);
    ++res.relocation_trials;
    const double E = res.final_energy;
    if (r.status == SolveStatus::converged && r.final_energy < E - 1e-14 * std::max(1.0, std::abs(E))) {
      res.field = std::move(r.field);
      res.final_energy = r.final_energy;
      res.final_residual = r.final_residual;
      ++res.relocations_accepted;
      growing = true;
      th *= 2.0;
    } else {
      growing = false;
      th *= 0.5;
    }
  }
}

inline Params dirichlet_params(double p) {
  ParamsSpec s;
  s.p = p;
  s.gamma = 0.5 * p;
  s.delta = 0.0;
  s.alpha_p = 1.0;
  return Params(s);
}

inline SolverConfig dirichlet_config(double p, SolverConfig cfg) {
  if (p == 2.0) cfg.schedule = {Regularization{0.0, 0.0}};
  return cfg;
}

}  // namespace detail

// p-harmonic extension of the masked values into the free nodes (delta = 0 solve).
inline SolveResult p_harmonic_extension(const ScalarField& data, double p, const SolverConfig& cfg = {}) {
  return minimize(data, detail::dirichlet_params(p), detail::dirichlet_config(p, cfg));
}

// Replaces `field` inside the ball by the discrete p-harmonic function with the
// same values outside. The ball must stay one cell away from the box boundary.
inline ScalarField p_harmonic_replacement(const ScalarField& field, const BallSpec& ball, double p,
                                          const SolverConfig& cfg = {}) {
  field.check_finite();
  const Grid& g = field.grid();
  if (!(ball.radius > 0.0) || !ball_inside(g, ball, 1.0))
    throw Error("p_harmonic_replacement: region touches the grid boundary");
  ScalarField work(g, field.values());
  std::size_t inside = 0;
  for (Index i = 0; i < g.size(); ++i) {
    if (in_ball(g, i, ball)) {
      ++inside;
    } else {
      work.fix(i, field[i]);
    }
  }
  if (inside == 0) throw Error("p_harmonic_replacement: ball contains no nodes");
  SolveResult r = p_harmonic_extension(work, p, cfg);
  if (r.status == SolveStatus::stalled) throw Error("p_harmonic_replacement: " + r.message);
  ScalarField out = field;
  for (Index i = 0; i < g.size(); ++i)
    if (in_ball(g, i, ball)) out[i] = r.field[i];
  return out;
}

// Ball nodes plus their face neighbors: every corner density that depends on a
// ball node is attributed to a node of this set.
inline NodeMask ball_closure(const Grid& g, const BallSpec& ball) {
  NodeMask m = ball_mask(g, ball);
  NodeMask out = m;
  for (Index i = 0; i < g.size(); ++i)
    if (m[i]) g.for_each_face_neighbor(i, [&](Index j) { out[j] = 1; });
  return out;
}

struct ComparisonGap {
  double energy_gap = 0.0;     // sum w (|grad u|^p - |grad ubar|^p) / p
  double distance_term = 0.0;  // p >= 2: sum w |grad u - grad ubar|^p; else the (|a|+|b|)^(p-2)|a-b|^2 form
  double ratio = 0.0;          // energy_gap / distance_term (0 when both vanish)
};

inline ComparisonGap comparison_gap(const ScalarField& field, const ScalarField& replacement, const BallSpec& ball,
                                    double p) {
  if (!(field.grid() == replacement.grid())) throw Error("comparison_gap: mismatched grids");
  const Grid& g = field.grid();
  const NodeMask region = ball_closure(g, ball);
  const auto& u = field.values();
  const auto& ub = replacement.values();
  ComparisonGap out;
  const std::size_t cells = detail::cell_count(g);
  for (std::size_t c = 0; c < cells; ++c) {
    detail::for_each_corner_of_cell(g, c, [&](const detail::Corner& cn) {
      if (!region[cn.node]) return;
      std::array<double, kMaxDim> a{}, b{};
      const double a2 = detail::corner_gradient_sq(cn, u, g.dim(), &a);
      const double b2 = detail::corner_gradient_sq(cn, ub, g.dim(), &b);
      double d2 = 0.0;
      for (int k = 0; k < g.dim(); ++k) d2 += (a[k] - b[k]) * (a[k] - b[k]);
      out.energy_gap += cn.weight * (std::pow(a2, 0.5 * p) - std::pow(b2, 0.5 * p)) / p;
      if (p >= 2.0) {
        out.distance_term += cn.weight * std::pow(d2, 0.5 * p);
      } else if (d2 > 0.0) {
        out.distance_term += cn.weight * std::pow(std::sqrt(a2) + std::sqrt(b2), p - 2.0) * d2;
      }
    });
  }
  out.ratio = out.distance_term > 0.0 ? out.energy_gap / out.distance_term : 0.0;
  return out;
}

struct NonlinearityGap {
  double gap = 0.0;       // sum w (F(ubar) - F(u)) over the ball
  double bound = 0.0;     // constant * sum w |u - ubar|^min(gamma, 1)
  double constant = 0.0;  // pointwise Lipschitz/Hoelder constant used
  bool holds = true;
};

// gamma <= 1: |F(a) - F(b)| <= (lambda_+ + lambda_-) |a - b|^gamma.
// gamma >= 1: |F(a) - F(b)| <= gamma (lambda_+ + lambda_-) (2M)^(gamma-1) |a - b|
// with M the larger sup of |u|, |ubar| over the ball.
inline NonlinearityGap nonlinearity_gap(const ScalarField& field, const ScalarField& replacement,
                                        const BallSpec& ball, const Params& prm) {
  if (!(field.grid() == replacement.grid())) throw Error("nonlinearity_gap: mismatched grids");
  const Grid& g = field.grid();
  const double lam = prm.lambda_plus() + prm.lambda_minus();
  const double gm = prm.gamma();
  double sup = 0.0;
  for (Index i = 0; i < g.size(); ++i)
    if (in_ball(g, i, ball)) sup = std::max({sup, std::abs(field[i]), std::abs(replacement[i])});
  NonlinearityGap out;
  out.constant = gm <= 1.0 ? lam : gm * lam * std::pow(2.0 * sup, gm - 1.0);
  const double expo = std::min(gm, 1.0);
  double norm = 0.0;
  for (Index i = 0; i < g.size(); ++i) {
    if (!in_ball(g, i, ball)) continue;
    const double w = g.weight(i);
    out.gap += w * (potential_value(replacement[i], prm) - potential_value(field[i], prm));
    norm += w * std::pow(std::abs(field[i] - replacement[i]), expo);
  }
  out.bound = out.constant * norm;
  out.holds = out.gap <= out.bound * (1.0 + 1e-12) + 1e-300;
  return out;
}

}  // namespace apl
