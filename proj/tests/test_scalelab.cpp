#include <gtest/gtest.h>

#include <cmath>

#include "apl/scalelab.hpp"

using namespace apl;

namespace {

Params params(double p, double gamma, double delta = 1.0) {
  ParamsSpec s;
  s.p = p;
  s.gamma = gamma;
  s.lambda_plus = 1.0;
  s.lambda_minus = 2.0;
  s.delta = delta;
  s.alpha_p = 1.0;
  return Params(s);
}

double ball_energy(const ScalarField& f, const Params& prm, const BallSpec& b) {
  return total_energy(f, prm, Regularization{}, ball_mask(f.grid(), b));
}

}  // namespace

TEST(Rescale, EnergyIdentity) {
  const Grid g({{-1.0, 1.0}, {-1.0, 1.0}}, {129, 129});
  const ScalarField f = ScalarField::sample(
      g, [](const Point& x) { return std::sin(2.0 * x[0] + 0.4) * std::cos(1.5 * x[1]) + 0.3 * x[0] * x[1]; });
  const Point z = g.point(g.nearest(Point{0.125, -0.25, 0.0}));
  for (double p : {2.0, 3.0}) {
    const Params prm = params(p, 0.5, 0.7);
    for (double r : {0.5, 0.25}) {
      for (double s : {std::pow(r, 1.0 + prm.tau()), 0.3}) {
        const double R = 0.5;
        const Rescaled rs = rescale(f, z, r, s, prm, R);
        const double lhs = ball_energy(f, prm, BallSpec{z, R});
        const double rhs = rs.energy_factor * ball_energy(rs.field, rs.params, BallSpec{Point{0.0, 0.0, 0.0}, R / r});
        EXPECT_NEAR(rhs / lhs, 1.0, 1e-10) << "p=" << p << " r=" << r << " s=" << s;
      }
    }
  }
}

TEST(Rescale, NaturalScalingKeepsDelta) {
  const Grid g({{-1.0, 1.0}}, {65});
  const ScalarField f(g, 1.0);
  const Params prm = params(2.0, 0.5, 0.7);
  const double r = 0.25;
  const Rescaled rs = rescale(f, Point{0.0, 0.0, 0.0}, r, std::pow(r, 1.0 + prm.tau()), prm, 0.5);
  EXPECT_NEAR(rs.params.delta(), 0.7, 1e-14);
  EXPECT_NEAR(rs.energy_factor, std::pow(r, 1.0 + 2.0 * prm.tau()), 1e-14);
  EXPECT_THROW(rescale(f, Point{0.8, 0.0, 0.0}, r, 1.0, prm, 0.5), Error);
}

TEST(Growth, SyntheticPowerLaw) {
  const Grid g({{-1.0, 1.0}, {-1.0, 1.0}}, {257, 257});
  const double h = g.spacing(0);
  const double beta = 4.0 / 3.0, a = 0.7;
  const ScalarField f = ScalarField::sample(g, [&](const Point& x) {
    return x[0] > 0.0 ? a * std::pow(x[0], beta) : -0.5 * a * std::pow(-x[0], beta);
  });
  const Params prm = params(2.0, 0.5);
  std::vector<double> radii;
  for (int k = 0; k <= 6; ++k) radii.push_back(64.0 * h * std::pow(2.0, -0.5 * k));
  const GrowthProfile gp = growth_profile(f, Point{0.0, 0.0, 0.0}, radii, prm);
  // Off-node radii: the sup sits at the last node inside the ball.
  double worst = INFINITY;
  for (std::size_t k = 0; k < gp.radii.size(); ++k) {
    const double reach = std::floor(gp.radii[k] / h + 1e-9) * h;
    EXPECT_NEAR(gp.sup_plus[k], a * std::pow(reach, beta), 1e-14);
    EXPECT_NEAR(gp.sup_minus[k], 0.5 * a * std::pow(reach, beta), 1e-14);
    worst = std::min(worst, std::pow(reach / gp.radii[k], beta));
  }
  EXPECT_NEAR(fit_exponent(gp, GrowthQuantity::sup_abs).slope, beta, 0.01);
  EXPECT_NEAR(fit_exponent(gp, GrowthQuantity::sup_minus).slope, beta, 0.01);
  EXPECT_NEAR(nondegeneracy_ratio(gp, prm, +1), a * worst, 1e-12);
  EXPECT_NEAR(nondegeneracy_ratio(gp, prm, -1), 0.5 * a * worst, 1e-12);
  // Dirichlet growth: N + p (beta - 1) = 2 + 2/3.
  EXPECT_NEAR(fit_exponent(gp, GrowthQuantity::dirichlet).slope, 8.0 / 3.0, 0.05);
  EXPECT_THROW(growth_profile(f, Point{0.0, 0.0, 0.0}, {h}, prm), Error);
  EXPECT_THROW(growth_profile(f, Point{0.9, 0.0, 0.0}, {0.5}, prm), Error);
}

TEST(Growth, DefaultLadder) {
  const Grid g({{-1.0, 1.0}, {-1.0, 1.0}}, {513, 513});
  const auto r = default_radius_ladder(g, Point{0.0, 0.5, 0.0});
  ASSERT_EQ(r.size(), 6u);
  EXPECT_DOUBLE_EQ(r[0], 0.25);
  EXPECT_DOUBLE_EQ(r[5], 0.25 / 32.0);
  // Radii below 2h are dropped.
  EXPECT_EQ(default_radius_ladder(Grid({{-1.0, 1.0}, {-1.0, 1.0}}, {65, 65}), Point{0.0, 0.5, 0.0}).size(), 3u);
}

TEST(Caccioppoli, BoundedOnSmoothField) {
  const Grid g({{-1.0, 1.0}, {-1.0, 1.0}}, {129, 129});
  const ScalarField f = ScalarField::sample(g, [](const Point& x) { return std::pow(std::max(x[0], 0.0), 1.5); });
  const Params prm = params(2.0, 0.5);
  for (double k : {0.0, 0.01})
    for (double r : {0.1, 0.2}) {
      const CaccioppoliResult c = caccioppoli_check(f, Point{0.0, 0.0, 0.0}, k, r, 2.0 * r, prm);
      EXPECT_GT(c.rhs, 0.0);
      EXPECT_GE(c.lhs, 0.0);
      EXPECT_LT(c.ratio, 100.0);
    }
  const CaccioppoliResult none = caccioppoli_check(f, Point{0.0, 0.0, 0.0}, 10.0, 0.1, 0.2, prm);
  EXPECT_EQ(none.ratio, 0.0);
  EXPECT_THROW(caccioppoli_check(f, Point{0.0, 0.0, 0.0}, 0.0, 0.2, 0.1, prm), Error);
}
