#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "apl/solver.hpp"

using namespace apl;

namespace {

Params make(double p, double gamma, double lp, double lm, double alpha = 1.0) {
  ParamsSpec s;
  s.p = p;
  s.gamma = gamma;
  s.lambda_plus = lp;
  s.lambda_minus = lm;
  s.alpha_p = alpha;
  return Params(s);
}

ScalarField boundary_problem(const Grid& g, double (*fn)(double)) {
  ScalarField f(g);
  for (Index i = 0; i < g.size(); ++i)
    if (g.on_boundary(i)) f.fix(i, fn(g.point(i)[0]));
  return f;
}

double sup_error(const ScalarField& f, double (*fn)(double)) {
  double e = 0.0;
  for (Index i = 0; i < f.size(); ++i) e = std::max(e, std::abs(f[i] - fn(f.grid().point(i)[0])));
  return e;
}

SolverConfig fine_config() {
  SolverConfig c;
  c.schedule = default_schedule(1e-1, 1e-8);
  return c;
}

}  // namespace

TEST(Solver, ObstacleProfile) {
  const Grid g({{-1.0, 1.0}}, {257});
  auto exact = [](double x) { return x > 0.0 ? 0.25 * x * x : 0.0; };
  const SolveResult r = minimize(boundary_problem(g, +exact), make(2.0, 1.0, 0.5, 0.5), fine_config());
  ASSERT_EQ(r.status, SolveStatus::converged) << r.message;
  EXPECT_LT(sup_error(r.field, +exact), 1e-3);
  EXPECT_LE(r.final_energy, r.initial_energy);
}

TEST(Solver, DegenerateProfile) {
  const Grid g({{-1.0, 1.0}}, {257});
  auto exact = [](double x) { return x > 0.0 ? std::pow(x, 1.5) : 0.0; };
  const SolveResult r = minimize(boundary_problem(g, +exact), make(3.0, 1.0, 2.25, 2.25), fine_config());
  ASSERT_EQ(r.status, SolveStatus::converged) << r.message;
  EXPECT_LT(sup_error(r.field, +exact), 5e-3);
}

TEST(Solver, EnergyDecreasesWithinStages) {
  const Grid g({{-1.0, 1.0}}, {129});
  auto data = [](double x) { return x; };
  const SolveResult r = minimize(boundary_problem(g, +data), make(2.0, 0.5, 1.0, 1.0), SolverConfig{});
  ASSERT_EQ(r.energy_trace.size(), r.trace_stage.size());
  for (std::size_t k = 1; k < r.energy_trace.size(); ++k)
    if (r.trace_stage[k] == r.trace_stage[k - 1]) EXPECT_LE(r.energy_trace[k], r.energy_trace[k - 1] * (1.0 + 1e-14));
  EXPECT_EQ(r.stages.size(), default_schedule().size());
}

TEST(Solver, HarmonicExtensionReproducesAffineData) {
  const Grid g({{0.0, 1.0}, {0.0, 1.0}}, {17, 17});
  ScalarField data = ScalarField::sample(g, [](const Point& x) { return 0.5 + 2.0 * x[0] - x[1]; });
  data.fix_box_boundary();
  for (Index i = 0; i < g.size(); ++i)
    if (!data.masked(i)) data[i] = 0.0;
  for (double p : {2.0, 3.0}) {
    const SolveResult r = p_harmonic_extension(data, p);
    ASSERT_EQ(r.status, SolveStatus::converged) << r.message;
    for (Index i = 0; i < g.size(); ++i) {
      const Point x = g.point(i);
      EXPECT_NEAR(r.field[i], 0.5 + 2.0 * x[0] - x[1], 1e-7);
    }
  }
}

TEST(Solver, MaskedNodesNeverMove) {
  const Grid g({{-1.0, 1.0}}, {65});
  auto data = [](double x) { return std::sin(3.0 * x); };
  ScalarField f = boundary_problem(g, +data);
  f.fix(20, 0.3);
  const SolveResult r = minimize(f, make(2.0, 0.5, 1.0, 1.0), SolverConfig{});
  EXPECT_EQ(r.field[0], f[0]);
  EXPECT_EQ(r.field[20], 0.3);
  EXPECT_EQ(r.field[64], f[64]);
}

TEST(Solver, DeterministicRepeat) {
  const Grid g({{-1.0, 1.0}, {-1.0, 1.0}}, {33, 33});
  ScalarField f = ScalarField::sample(g, [](const Point& x) { return x[0] + 0.3 * x[1]; });
  f.fix_box_boundary();
  const Params prm = make(2.0, 0.5, 1.0, 2.0);
  const SolveResult a = minimize(f, prm, SolverConfig{});
  const SolveResult b = minimize(f, prm, SolverConfig{});
  EXPECT_TRUE(a.field == b.field);
  EXPECT_EQ(a.energy_trace, b.energy_trace);
}

TEST(Solver, RelocationNeverRaisesEnergy) {
  const Grid g({{-1.0, 1.0}}, {257});
  auto data = [](double x) { return std::max(x, 0.0); };
  const Params prm = make(1.5, 0.3, 1.0, 1.0);
  SolverConfig off = fine_config();
  off.relocate = false;
  const SolveResult a = minimize(boundary_problem(g, +data), prm, off);
  const SolveResult b = minimize(boundary_problem(g, +data), prm, fine_config());
  ASSERT_EQ(a.status, SolveStatus::converged);
  ASSERT_EQ(b.status, SolveStatus::converged);
  EXPECT_EQ(a.relocation_trials, 0);
  EXPECT_GT(b.relocation_trials, 0);
  const double ea = total_energy(a.field, prm), eb = total_energy(b.field, prm);
  EXPECT_LE(eb, ea * (1.0 + 1e-12));
}

TEST(Solver, ConfigValidation) {
  const Grid g({{0.0, 1.0}}, {9});
  const ScalarField f(g);
  const Params prm = make(2.0, 1.0, 1.0, 1.0);
  SolverConfig c;
  c.schedule.clear();
  EXPECT_THROW(minimize(f, prm, c), Error);
  c = SolverConfig{};
  c.schedule = {Regularization{1e-3, 0.0}, Regularization{1e-2, 0.0}};
  EXPECT_THROW(minimize(f, prm, c), Error);
  c = SolverConfig{};
  c.max_iters = 0;
  EXPECT_THROW(minimize(f, prm, c), Error);
  c = SolverConfig{};
  c.armijo_c1 = 1.0;
  EXPECT_THROW(minimize(f, prm, c), Error);
  c = SolverConfig{};
  c.max_relocations = -1;
  EXPECT_THROW(minimize(f, prm, c), Error);
}

TEST(Comparison, QuadraticIdentity) {
  // For p = 2 the replacement is the discrete Dirichlet projection, so the
  // energy gap is exactly half the squared gradient distance.
  const Grid g({{-1.0, 1.0}, {-1.0, 1.0}}, {41, 41});
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ScalarField f(g);
  for (Index i = 0; i < g.size(); ++i) f[i] = u(rng);
  const BallSpec ball{{0.1, -0.05, 0.0}, 0.6};
  const ScalarField rep = p_harmonic_replacement(f, ball, 2.0);
  const ComparisonGap cg = comparison_gap(f, rep, ball, 2.0);
  EXPECT_GT(cg.energy_gap, 0.0);
  EXPECT_NEAR(cg.ratio, 0.5, 1e-6);
  for (Index i = 0; i < g.size(); ++i)
    if (!in_ball(g, i, ball)) EXPECT_EQ(rep[i], f[i]);
}

TEST(Comparison, GapNonnegativeForOtherExponents) {
  const Grid g({{-1.0, 1.0}, {-1.0, 1.0}}, {25, 25});
  const ScalarField f =
      ScalarField::sample(g, [](const Point& x) { return std::sin(2.0 * x[0]) * std::cos(3.0 * x[1]) + x[0] * x[1]; });
  const BallSpec ball{{0.0, 0.0, 0.0}, 0.7};
  for (double p : {1.5, 3.0}) {
    const ScalarField rep = p_harmonic_replacement(f, ball, p);
    const ComparisonGap cg = comparison_gap(f, rep, ball, p);
    EXPECT_GE(cg.energy_gap, 0.0) << p;
    EXPECT_GE(cg.ratio, 0.0) << p;
  }
  EXPECT_THROW(p_harmonic_replacement(f, BallSpec{{0.0, 0.0, 0.0}, 0.99}, 2.0), Error);
}

TEST(Comparison, NonlinearityBound) {
  const Grid g({{-1.0, 1.0}}, {129});
  const ScalarField f = ScalarField::sample(g, [](const Point& x) { return std::sin(5.0 * x[0]); });
  const BallSpec ball{{0.0, 0.0, 0.0}, 0.5};
  const ScalarField rep = p_harmonic_replacement(f, ball, 2.0);
  for (double gamma : {0.5, 1.0, 1.5}) {
    const NonlinearityGap ng = nonlinearity_gap(f, rep, ball, make(2.0, gamma, 1.0, 0.5));
    EXPECT_TRUE(ng.holds) << gamma;
    EXPECT_LE(std::abs(ng.gap), ng.bound * (1.0 + 1e-12));
  }
}

TEST(Solver, OneDimensionalHarmonicIsAffine) {
  const Grid g({{0.0, 1.0}}, {65});
  auto data = [](double x) { return x; };
  for (double p : {1.5, 2.0, 3.0}) {
    const SolveResult r = p_harmonic_extension(boundary_problem(g, +data), p);
    ASSERT_EQ(r.status, SolveStatus::converged) << p;
    EXPECT_LE(sup_error(r.field, +data), 1e-8) << p;
  }
}

TEST(Solver, RadialPHarmonicOnAnnulus) {
  // |x|^(1/2) is 3-harmonic in 2D away from the origin.
  const Grid g({{-1.0, 1.0}, {-1.0, 1.0}}, {257, 257});
  auto exact = [](const Point& x) { return std::pow(std::hypot(x[0], x[1]), 0.5); };
  ScalarField f(g);
  for (Index i = 0; i < g.size(); ++i) {
    const Point x = g.point(i);
    if (g.on_boundary(i) || std::hypot(x[0], x[1]) <= 0.25) f.fix(i, exact(x));
  }
  const SolveResult r = p_harmonic_extension(f, 3.0);
  ASSERT_EQ(r.status, SolveStatus::converged) << r.message;
  double err = 0.0;
  for (Index i = 0; i < g.size(); ++i) err = std::max(err, std::abs(r.field[i] - exact(g.point(i))));
  EXPECT_LE(err, 1e-2);
}

TEST(Solver, ReplacementOfAffineFieldIsIdentity) {
  const Grid g({{-1.0, 1.0}, {-1.0, 1.0}}, {33, 33});
  const ScalarField f = ScalarField::sample(g, [](const Point& x) { return 0.2 - x[0] + 3.0 * x[1]; });
  const BallSpec ball{{0.0, 0.0, 0.0}, 0.5};
  for (double p : {1.5, 2.0, 3.0}) {
    const ScalarField rep = p_harmonic_replacement(f, ball, p);
    for (Index i = 0; i < g.size(); ++i) EXPECT_NEAR(rep[i], f[i], 1e-7);
    const ComparisonGap cg = comparison_gap(f, f, ball, p);
    EXPECT_EQ(cg.energy_gap, 0.0);
    EXPECT_EQ(cg.distance_term, 0.0);
  }
}

TEST(Solver, ReplacementDoesNotRaiseDirichletEnergyOrRange) {
  const Grid g({{-1.0, 1.0}, {-1.0, 1.0}}, {33, 33});
  const ScalarField f = ScalarField::sample(g, [](const Point& x) { return std::sin(4.0 * x[0] * x[1]) + x[0]; });
  const BallSpec ball{{0.1, 0.0, 0.0}, 0.55};
  const NodeMask region = ball_closure(g, ball);
  for (double p : {1.5, 2.0, 3.0}) {
    const ScalarField rep = p_harmonic_replacement(f, ball, p);
    EXPECT_LE(dirichlet_energy(rep, p, 0.0, region), dirichlet_energy(f, p, 0.0, region) * (1.0 + 1e-12));
    double inner = 0.0, outer = 0.0;
    for (Index i = 0; i < g.size(); ++i) {
      if (in_ball(g, i, ball)) inner = std::max(inner, std::abs(rep[i]));
      else if (region[i]) outer = std::max(outer, std::abs(f[i]));
    }
    EXPECT_LE(inner, outer + 1e-8) << p;
  }
}

TEST(Comparison, PerturbedReplacementRatioIsPositive) {
  const Grid g({{-1.0, 1.0}}, {65});
  const ScalarField base = ScalarField::sample(g, [](const Point& x) { return std::cos(2.0 * x[0]); });
  const BallSpec ball{{0.0, 0.0, 0.0}, 0.6};
  const ScalarField rep = p_harmonic_replacement(base, ball, 3.0);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  double smallest = INFINITY;
  for (int t = 0; t < 100; ++t) {
    ScalarField f = rep;
    for (Index i = 0; i < g.size(); ++i)
      if (in_ball(g, i, ball)) f[i] += u(rng);
    const ComparisonGap cg = comparison_gap(f, rep, ball, 3.0);
    EXPECT_GE(cg.energy_gap, 0.0);
    smallest = std::min(smallest, cg.ratio);
  }
  EXPECT_GT(smallest, 0.0);
}

TEST(Comparison, NonlinearityExamples) {
  const Grid g({{-1.0, 1.0}}, {65});
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const BallSpec ball{{0.0, 0.0, 0.0}, 0.5};
  const Params half = make(2.0, 0.5, 1.0, 1.0);
  const Params lip = make(2.0, 1.0, 1.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    ScalarField a(g), b(g);
    for (Index i = 0; i < g.size(); ++i) a[i] = u(rng), b[i] = u(rng);
    const NonlinearityGap ng = nonlinearity_gap(a, b, ball, half);
    EXPECT_DOUBLE_EQ(ng.constant, 2.0);
    EXPECT_TRUE(ng.holds);
    const NonlinearityGap nl = nonlinearity_gap(a, b, ball, lip);
    double l1 = 0.0;
    for (Index i = 0; i < g.size(); ++i)
      if (in_ball(g, i, ball)) l1 += g.weight(i) * std::abs(a[i] - b[i]);
    EXPECT_LE(nl.gap, l1 * (1.0 + 1e-12));
  }
  ScalarField a(g, 0.3);
  const NonlinearityGap same = nonlinearity_gap(a, a, ball, half);
  EXPECT_EQ(same.gap, 0.0);
  EXPECT_TRUE(same.holds);
}
