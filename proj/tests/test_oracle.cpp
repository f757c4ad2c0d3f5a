#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "apl/energy.hpp"
#include "apl/oracle.hpp"

using namespace apl;

namespace {

Params make(double p, double gamma, double lp, double lm) {
  ParamsSpec s;
  s.p = p;
  s.gamma = gamma;
  s.lambda_plus = lp;
  s.lambda_minus = lm;
  s.alpha_p = 1.0;
  return Params(s);
}

ShootConfig quick() {
  ShootConfig c;
  c.step_fraction = 1e-4;
  return c;
}

}  // namespace

TEST(OnePhase, Examples) {
  const ExactProfile a = one_phase_profile(make(2.0, 1.0, 0.5, 0.5));
  EXPECT_DOUBLE_EQ(a.beta, 2.0);
  EXPECT_NEAR(a.coefficient, 0.25, 1e-15);
  EXPECT_NEAR(a(0.5), 0.0625, 1e-15);
  EXPECT_EQ(a(-0.5), 0.0);
  const ExactProfile b = one_phase_profile(make(3.0, 1.0, 2.25, 2.25));
  EXPECT_DOUBLE_EQ(b.beta, 1.5);
  EXPECT_NEAR(b.coefficient, 1.0, 1e-14);
  const ExactProfile c = one_phase_profile(make(2.0, 0.5, 1.0, 1.0));
  EXPECT_NEAR(c.beta, 4.0 / 3.0, 1e-15);
  EXPECT_NEAR(c.coefficient, std::pow(9.0 / 8.0, 2.0 / 3.0), 1e-14);
  EXPECT_THROW(one_phase_profile(make(2.0, 0.5, 0.0, 1.0)), Error);
}

TEST(OnePhase, CoefficientIdentityOnRandomParameters) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> up(1.1, 6.0), ur(0.01, 0.99), ul(0.05, 10.0);
  for (int k = 0; k < 1000; ++k) {
    const double p = up(rng), gamma = ur(rng) * p, lambda = ul(rng);
    const double beta = p / (p - gamma);
    const double a = one_phase_coefficient(p, gamma, lambda);
    const double lhs = std::pow(a, p - gamma) * std::pow(beta, p - 1.0) * (beta - 1.0) * (p - 1.0);
    EXPECT_NEAR(lhs / (gamma * lambda), 1.0, 1e-12) << p << ' ' << gamma << ' ' << lambda;
  }
}

TEST(OnePhase, ProfileSolvesTheOdeAwayFromZero) {
  // (|u'|^(p-2) u')' = gamma lambda u^(gamma-1), checked by differences of the flux.
  for (const auto& [p, gamma, lambda] : {std::tuple{2.0, 0.5, 1.0}, {3.0, 0.8, 2.0}, {1.5, 0.3, 0.7}}) {
    const ExactProfile e = one_phase_profile(make(p, gamma, lambda, lambda));
    auto flux = [&](double x) {
      const double d = e.coefficient * e.beta * std::pow(x, e.beta - 1.0);
      return std::pow(d, p - 1.0);
    };
    for (double x : {0.1, 0.5, 0.9}) {
      const double h = 1e-5;
      const double lhs = (flux(x + h) - flux(x - h)) / (2.0 * h);
      const double rhs = gamma * lambda * std::pow(e(x), gamma - 1.0);
      EXPECT_NEAR(lhs / rhs, 1.0, 1e-8) << p << ' ' << x;
    }
  }
}

TEST(TwoPhase, SymmetricCoefficient) {
  const ExactProfile e = two_phase_profile(make(2.0, 0.5, 1.0, 1.0));
  EXPECT_NEAR(e.coefficient, 1.0816871777305566, 1e-15);
  EXPECT_NEAR(e(0.3), -e(-0.3), 1e-15);
  const ExactProfile f = two_phase_profile(make(2.0, 1.0, 0.5, 2.0));
  EXPECT_NEAR(f(-1.0), -1.0, 1e-14);
  EXPECT_NEAR(f(1.0), 0.25, 1e-15);
}

TEST(Radial, Examples) {
  EXPECT_NEAR(radial_p_harmonic(3, 2.0)(Point{0.5, 0.0, 0.0}), 2.0, 1e-15);
  EXPECT_NEAR(radial_p_harmonic(2, 2.0)(Point{0.0, std::exp(1.0), 0.0}), 1.0, 1e-15);
  const ExactProfile r = radial_p_harmonic(2, 3.0);
  EXPECT_DOUBLE_EQ(r.beta, 0.5);
  EXPECT_NEAR(r(Point{0.3, 0.4, 0.0}), std::sqrt(0.5), 1e-15);
  EXPECT_THROW(radial_p_harmonic(1, 2.0), Error);
}

TEST(Radial, ResidualOnAnnulusShrinks) {
  const ExactProfile e = radial_p_harmonic(2, 3.0);
  ParamsSpec s;
  s.p = 3.0;
  s.gamma = 1.5;
  s.delta = 0.0;
  s.alpha_p = 1.0;
  const Params prm(s);
  double last = 0.0;
  for (std::size_t n : {33u, 65u, 129u}) {
    const Grid g({{0.5, 1.5}, {0.5, 1.5}}, {n, n});
    ScalarField f = ScalarField::sample(g, [&](const Point& x) { return e(x); });
    f.fix_box_boundary();
    const double r = el_residual(f, prm, {}, 0.0);
    if (last > 0.0) EXPECT_LT(r, 0.35 * last) << n;
    last = r;
  }
  EXPECT_LT(last, 1e-3);
}

TEST(Shoot, OddSolutionForAntisymmetricData) {
  const Params prm = make(2.0, 0.5, 1.0, 1.0);
  // Data above the profile value at 1, so the zero set is a single point.
  const ShootReport rep = shoot_two_phase_1d(prm, -2.0, 2.0, -1.0, 1.0, quick());
  ASSERT_FALSE(rep.roots.empty());
  for (const ShotSolution& s : rep.roots) {
    EXPECT_LE(s.mismatch, 1e-8);
    EXPECT_LE(s.refinement_delta, 1e-6);
  }
  // The odd solution is among the roots.
  bool odd = false;
  for (const ShotSolution& s : rep.roots) {
    double worst = 0.0;
    for (double x = 0.0; x <= 1.0; x += 0.01) worst = std::max(worst, std::abs(s.at(x) + s.at(-x)));
    odd |= worst <= 1e-6;
  }
  EXPECT_TRUE(odd);
}

TEST(Shoot, MatchesOnePhaseProfile) {
  const Params prm = make(2.0, 0.5, 1.0, 1.0);
  const ExactProfile e = one_phase_profile(prm);
  const double a = 0.2, b = 1.0;
  const ShootReport rep = shoot_two_phase_1d(prm, e(a), e(b), a, b);
  ASSERT_EQ(rep.roots.size(), 1u);
  const ShotSolution& s = rep.roots.front();
  double err = 0.0;
  for (std::size_t k = 0; k < s.x.size(); k += 97) err = std::max(err, std::abs(s.u[k] - e(s.x[k])));
  EXPECT_LE(err, 1e-6);
}

TEST(Shoot, FluxIncrementsMatchIntegratedRhs) {
  const Params prm = make(3.0, 1.0, 2.25, 2.25);
  const ShootReport rep = shoot_two_phase_1d(prm, 0.1, 1.0, 0.2, 1.0, quick());
  ASSERT_FALSE(rep.roots.empty());
  const ShotSolution& s = rep.roots.front();
  for (std::size_t k = 0; k + 1 < s.x.size(); k += 53) {
    // gamma = 1: the right-hand side is the constant lambda while u > 0.
    if (s.u[k] <= 0.0 || s.u[k + 1] <= 0.0) continue;
    EXPECT_NEAR(s.flux[k + 1] - s.flux[k], 2.25 * (s.x[k + 1] - s.x[k]), 1e-8);
  }
}

TEST(Shoot, RejectsBadInput) {
  EXPECT_THROW(shoot_two_phase_1d(make(2.0, 1.0, 0.0, 1.0), 0.0, 1.0, 0.0, 1.0, quick()), Error);
  EXPECT_THROW(shoot_two_phase_1d(make(2.0, 1.0, 1.0, 1.0), 0.0, 1.0, 1.0, 0.0, quick()), Error);
}

TEST(Barrier, ExactTwoPhaseProfileSatisfiesIt) {
  for (const auto& [p, gamma] : {std::pair{2.0, 0.5}, {3.0, 0.8}, {1.5, 0.3}, {2.0, 1.0}}) {
    const Params prm = make(p, gamma, 1.0, 1.5);
    const ExactProfile e = two_phase_profile(prm);
    for (double r : {0.05, 0.2, 0.5})
      for (int sign : {+1, -1}) {
        const BarrierCheck bc = barrier_check_1d([&](double x) { return e(x); }, prm, 0.0, r, sign);
        EXPECT_TRUE(bc.holds) << p << ' ' << gamma << ' ' << r << ' ' << sign;
        EXPECT_GT(bc.barrier, 0.0);
      }
  }
}

TEST(Barrier, FailsForVanishingPhase) {
  const Params prm = make(2.0, 0.5, 1.0, 1.0);
  const BarrierCheck bc = barrier_check_1d([](double x) { return x > 0.0 ? x : 0.0; }, prm, 0.0, 0.1, -1);
  EXPECT_FALSE(bc.holds);
}
