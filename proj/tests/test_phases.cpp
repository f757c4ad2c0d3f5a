#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "apl/phases.hpp"

using namespace apl;

namespace {

Params params(double p, double gamma) {
  ParamsSpec s;
  s.p = p;
  s.gamma = gamma;
  s.alpha_p = 1.0;
  return Params(s);
}

bool contains(const NodeSet& s, Index i) { return std::binary_search(s.begin(), s.end(), i); }

}  // namespace

TEST(Decompose, LabelsByTolerance) {
  const Grid g({{0.0, 1.0}}, {5});
  const ScalarField f(g, std::vector<double>{-1.0, -1e-9, 0.0, 1e-9, 2.0});
  const PhaseDecomposition d = decompose(f, 1e-8);
  EXPECT_EQ(d.negative_nodes, NodeSet{0});
  EXPECT_EQ(d.zero_nodes, (NodeSet{1, 2, 3}));
  EXPECT_EQ(d.positive_nodes, NodeSet{4});
  const PhaseDecomposition strict = decompose(f, 0.0);
  EXPECT_EQ(strict.zero_nodes, NodeSet{2});
  EXPECT_THROW(decompose(f, -1.0), Error);
}

TEST(Classify, BranchingAndNonbranching) {
  const Grid g({{-1.0, 1.0}}, {129});
  const Params prm = params(2.0, 0.5);
  const PhaseTolerances tol = PhaseTolerances::for_grid(g, prm);
  const Index mid = 64;

  // A x |x|^(1/3): flat two-phase crossing.
  const ScalarField flat =
      ScalarField::sample(g, [](const Point& x) { return 1.08 * x[0] * std::cbrt(std::abs(x[0])); });
  const auto cf = classify(decompose(flat, tol.zero_tol), gradient_field(flat), tol.grad_tol);
  EXPECT_TRUE(contains(cf.branching, mid));
  EXPECT_TRUE(cf.nonbranching.empty());
  EXPECT_TRUE(contains(cf.gamma_zero, mid));

  // 2x: transversal crossing.
  const ScalarField steep = ScalarField::sample(g, [](const Point& x) { return 2.0 * x[0]; });
  const auto cs = classify(decompose(steep, tol.zero_tol), gradient_field(steep), tol.grad_tol);
  EXPECT_TRUE(cs.branching.empty());
  EXPECT_TRUE(contains(cs.nonbranching, mid));
  EXPECT_TRUE(cs.gamma_zero.empty());

  // One phase: Gamma_0 without two-phase points.
  const ScalarField one =
      ScalarField::sample(g, [](const Point& x) { return x[0] > 0.0 ? std::pow(x[0], 4.0 / 3.0) : 0.0; });
  const auto co = classify(decompose(one, tol.zero_tol), gradient_field(one), tol.grad_tol);
  EXPECT_TRUE(co.two_phase.empty());
  EXPECT_FALSE(co.gamma_zero.empty());
  for (Index i : co.gamma_all) EXPECT_NEAR(g.point(i)[0], 0.0, 0.05);
}

TEST(Classify, InteriorFlatZeroSetIsNotGamma) {
  const Grid g({{-1.0, 1.0}, {-1.0, 1.0}}, {33, 33});
  const ScalarField f = ScalarField::sample(g, [](const Point& x) { return std::max(x[0] - 0.5, 0.0); });
  const auto c = classify(decompose(f, 1e-12), gradient_field(f), 1e-3);
  for (Index i : c.gamma_all) EXPECT_NEAR(g.point(i)[0], 0.5, 0.07);
  EXPECT_FALSE(contains(c.gamma_all, g.nearest(Point{0.0, 0.0, 0.0})));
}

TEST(Distance, MatchesBruteForce) {
  std::mt19937_64 rng(9);
  for (int dim = 1; dim <= 3; ++dim) {
    std::vector<Interval> ext;
    std::vector<std::size_t> res;
    for (int k = 0; k < dim; ++k) {
      ext.push_back({0.0, 1.0 + 0.5 * k});
      res.push_back(dim == 3 ? 9 : 23 - 4 * k);
    }
    const Grid g(ext, res);
    std::uniform_int_distribution<Index> pick(0, g.size() - 1);
    NodeSet set;
    for (int k = 0; k < 5; ++k) set.push_back(pick(rng));
    std::sort(set.begin(), set.end());
    set.erase(std::unique(set.begin(), set.end()), set.end());
    const auto d = distance_to_set(g, set);
    for (Index i = 0; i < g.size(); ++i) {
      double best = INFINITY;
      for (Index j : set) best = std::min(best, distance(g.point(i), g.point(j), dim));
      EXPECT_NEAR(d[i], best, 1e-12) << "dim " << dim << " node " << i;
    }
  }
}

TEST(Distance, EmptySetIsInfinite) {
  const Grid g({{0.0, 1.0}}, {5});
  const auto d = distance_to_set(g, {});
  for (double v : d) EXPECT_TRUE(std::isinf(v));
}
