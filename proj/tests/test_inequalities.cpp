#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "apl/inequalities.hpp"

using namespace apl;

TEST(VMap, Examples) {
  const Vec a{3.0, 4.0};
  EXPECT_EQ(v_map(a, 2.0), a);
  EXPECT_EQ(v_map(Vec{0.0, 0.0}, 3.0), (Vec{0.0, 0.0}));
  const Vec v = v_map(a, 4.0);
  EXPECT_DOUBLE_EQ(v[0], 15.0);
  EXPECT_DOUBLE_EQ(v[1], 20.0);
}

TEST(VMap, OddAndHomogeneous) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5.0, 5.0), t(0.01, 10.0), pp(1.1, 4.0);
  for (int k = 0; k < 500; ++k) {
    const Vec a{u(rng), u(rng), u(rng)};
    const double p = pp(rng), s = t(rng);
    const Vec va = v_map(a, p);
    const Vec vn = v_map(Vec{-a[0], -a[1], -a[2]}, p);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(vn[i], -va[i], 1e-12 * std::abs(va[i]) + 1e-300);
    const Vec vs = v_map(Vec{s * a[0], s * a[1], s * a[2]}, p);
    const double na = detail::norm(a);
    EXPECT_NEAR(detail::norm(vs), std::pow(s, 0.5 * p) * std::pow(na, 0.5 * p), 1e-10 * detail::norm(vs));
  }
}

TEST(SumInequality, Examples) {
  const Vec a{1.0, -2.0, 0.5}, z{0.0, 0.0, 0.0};
  for (double p : {1.0, 1.5, 3.0}) EXPECT_GE(check_sum_inequality(a, z, p, 1.0).margin, 0.0);
  const InequalityReport tight = check_sum_inequality(a, a, 2.0, 1.0);
  EXPECT_NEAR(tight.margin, 0.0, 1e-12);
  EXPECT_NEAR(tight.lhs, 4.0 * 5.25, 1e-12);
  EXPECT_GE(check_sum_inequality(a, Vec{-0.5, 3.0, 1.0}, 0.5, 0.0).margin, 0.0);
  EXPECT_THROW(check_sum_inequality(a, a, 2.0, 0.0), Error);
  EXPECT_THROW(check_sum_inequality(a, Vec{1.0}, 2.0, 1.0), Error);
}

TEST(ConvexityInequality, Examples) {
  const Vec a{1.0, 2.0}, b{-3.0, 0.5};
  EXPECT_NEAR(check_convexity_inequality(a, a, 3.0).margin, 0.0, 1e-12);
  const double d2 = 16.0 + 2.25;
  EXPECT_NEAR(check_convexity_inequality(a, b, 2.0).margin, d2, 1e-12);
  EXPECT_GE(check_convexity_inequality(Vec{0.0, 0.0}, b, 1.5).margin, 0.0);
}

TEST(Monotonicity, Examples) {
  const Vec a{1.0, 2.0}, b{-3.0, 0.5};
  const InequalityReport same = check_monotonicity(a, a, 3.0);
  EXPECT_EQ(same.lhs, 0.0);
  EXPECT_EQ(same.rhs, 0.0);
  EXPECT_DOUBLE_EQ(monotonicity_constant(2.0), 1.0);
  EXPECT_NEAR(check_monotonicity(a, b, 2.0).margin, 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(monotonicity_constant(3.0), 0.5);
  EXPECT_DOUBLE_EQ(monotonicity_constant(1.5), 0.5 * std::pow(2.0, -0.5));
}

TEST(VEquivalence, Examples) {
  const Vec a{1.0, 2.0}, b{-3.0, 0.5};
  const InequalityReport r = check_v_equivalence(a, b, 2.0, 1.0);
  EXPECT_NEAR(r.margin, 0.0, 1e-12);
  EXPECT_NEAR(r.lhs, r.rhs, 1e-12);
  // b = 0: |V(a)|^2 = |a|^p = X.
  for (double p : {1.5, 3.0}) EXPECT_NEAR(v_ratio(a, Vec{0.0, 0.0}, p), 1.0, 1e-12);
  EXPECT_THROW(check_v_equivalence(a, b, 2.0, 0.5), Error);
}

TEST(VEquivalence, CalibratedConstantBoundsRandomPairs) {
  for (double p : {1.2, 1.5, 1.8, 3.0}) {
    const VCalibration cal = calibrate_v_constant(p, 3);
    EXPECT_GE(cal.worst_ratio, 1.0);
    EXPECT_DOUBLE_EQ(cal.c, cal.worst_ratio * 1.01);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 20000; ++k) {
      const Vec a{u(rng), u(rng), u(rng)}, b{u(rng), u(rng), u(rng)};
      const double r = v_ratio(a, b, p);
      EXPECT_LE(std::max(r, 1.0 / r), cal.worst_ratio * (1.0 + 1e-9)) << p;
    }
  }
}

TEST(Sweep, AllKindsHold) {
  struct Case {
    InequalityKind kind;
    double p, eps;
  };
  const Case cases[] = {{InequalityKind::sum, 0.5, 1.0},         {InequalityKind::sum, 1.5, 0.5},
                        {InequalityKind::sum, 3.0, 2.0},         {InequalityKind::sum, 4.0, 1.0},
                        {InequalityKind::convexity, 3.0, 1.0},   {InequalityKind::convexity, 1.5, 1.0},
                        {InequalityKind::monotonicity, 1.5, 1.0}, {InequalityKind::monotonicity, 3.0, 1.0},
                        {InequalityKind::v_equivalence, 1.5, 1.0}};
  for (const Case& c : cases) {
    SweepSpec s;
    s.kind = c.kind;
    s.p = c.p;
    s.eps = c.eps;
    s.count = 20000;
    s.seed = 99;
    if (c.kind == InequalityKind::v_equivalence) s.c = calibrate_v_constant(c.p, s.seed).c;
    const SweepSummary sum = sweep(s);
    EXPECT_GE(sum.evaluated, s.count - s.count / 32);
    EXPECT_GE(sum.min_relative_margin, -1e-12) << to_string(c.kind) << " p=" << c.p;
  }
}

TEST(Sweep, SeededAndReproducible) {
  SweepSpec s;
  s.kind = InequalityKind::monotonicity;
  s.p = 2.5;
  s.count = 5000;
  const SweepSummary a = sweep(s), b = sweep(s);
  EXPECT_EQ(a.min_margin, b.min_margin);
  EXPECT_EQ(a.witness.a, b.witness.a);
  s.seed = 2;
  EXPECT_NE(sweep(s).witness.a, a.witness.a);
}

TEST(Sweep, DetectsFalseInequality) {
  // c = 1 is below the calibrated constant for p != 2, so violations must show up.
  SweepSpec s;
  s.kind = InequalityKind::v_equivalence;
  s.p = 1.5;
  s.c = 1.0;
  s.count = 2000;
  EXPECT_LT(sweep(s).min_margin, 0.0);
}
