#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "geohj/relaxed_duality.hpp"

using namespace geohj;

namespace {

CotangentMeasure random_gamma(const Chart& c, int k, std::mt19937_64& rng, double scale = 1.0) {
  std::vector<CotangentAtom> atoms;
  std::vector<double> w;
  std::exponential_distribution<double> e(1.0);
  double s = 0.0;
  for (int i = 0; i < k; ++i) {
    Point x = c.sample_point(rng);
    atoms.push_back({x, c.sample_tangent(x, scale, rng)});
    w.push_back(e(rng));
    s += w.back();
  }
  for (double& x : w) x /= s;
  double t = 0.0;
  for (int i = 0; i + 1 < k; ++i) t += w[i];
  w.back() = 1.0 - t;
  return {atoms, w};
}

std::vector<Lagrangian> family() {
  std::vector<Lagrangian> out;
  for (const Chart& c : {Chart::flat_torus({1.0}), Chart::euclidean(2), Chart::sphere2(1.0)})
    for (double p : {1.5, 2.0, 3.0}) {
      out.push_back(Lagrangian::p_norm(c, p));
      out.push_back(Lagrangian::perturbed_p_norm(c, p, 0.2));
    }
  return out;
}

}  // namespace

TEST(RelaxedFunctionals, Examples) {
  auto e = Chart::euclidean(1);
  auto L = Lagrangian::p_norm(e, 2.0);
  Point x = e.point({0.0});
  CotangentMeasure dirac({{x, make_vec({1.5})}}, {1.0});
  EXPECT_DOUBLE_EQ(relaxed_hamiltonian(L, dirac), L.hamiltonian({x, make_vec({1.5})}));
  CotangentMeasure two({{x, make_vec({1.0})}, {e.point({0.3}), make_vec({-2.0})}}, {0.5, 0.5});
  EXPECT_NEAR(relaxed_hamiltonian(L, two), 1.25, 1e-15);
  TangentMeasure zero({{x, make_vec({0.0})}, {e.point({0.3}), make_vec({0.0})}}, {0.5, 0.5});
  EXPECT_EQ(relaxed_lagrangian(L, zero), 0.0);
  TangentMeasure sv({{x, make_vec({1.0})}, {e.point({0.3}), make_vec({2.0})}}, {0.5, 0.5});
  EXPECT_NEAR(relaxed_lagrangian(L, sv), 1.25, 1e-15);
}

TEST(RelaxedFunctionals, MixtureLinearity) {
  std::mt19937_64 rng(41);
  for (const Lagrangian& L : family()) {
    CotangentMeasure g = random_gamma(L.chart(), 4, rng);
    // two sub-measures with disjoint supports mixed with weight t
    CotangentMeasure g1({g.atoms[0], g.atoms[1]}, {0.5, 0.5}), g2({g.atoms[2], g.atoms[3]}, {0.25, 0.75});
    double t = 0.3;
    CotangentMeasure mix({g.atoms[0], g.atoms[1], g.atoms[2], g.atoms[3]},
                         {t * 0.5, t * 0.5, (1 - t) * 0.25, (1 - t) * 0.75});
    EXPECT_NEAR(relaxed_hamiltonian(L, mix), t * relaxed_hamiltonian(L, g1) + (1 - t) * relaxed_hamiltonian(L, g2),
                1e-12);
    TangentMeasure s1 = lifted_legendre_inverse(L, g1), s2 = lifted_legendre_inverse(L, g2);
    TangentMeasure smix = lifted_legendre_inverse(L, mix);
    EXPECT_NEAR(relaxed_lagrangian(L, smix), t * relaxed_lagrangian(L, s1) + (1 - t) * relaxed_lagrangian(L, s2),
                1e-12);
  }
}

TEST(RelaxedFunctionals, Superlinearity) {
  std::mt19937_64 rng(42);
  for (const Lagrangian& L : family()) {
    const Chart& c = L.chart();
    double threshold = L.multiplier().min() / L.p();
    for (int trial = 0; trial < 20; ++trial) {
      TangentMeasure s = lifted_legendre_inverse(L, random_gamma(c, 3, rng, 2.0));
      for (double K : {0.5, 1.0, 3.0})
        EXPECT_GE(relaxed_lagrangian(L, s), K * s.moment(c, 1.0) - L.superlinearity_constant(K) - 1e-12);
      EXPECT_GE(relaxed_lagrangian(L, s), threshold * s.moment(c, L.p()) - 1e-12);
    }
    // at K = 2 a_max / p the p-th power bound has no finite constant
    double K = 2.0 * L.multiplier().max() / L.p();
    Point x = c.sample_point(rng);
    Vec v = c.sample_tangent(x, 1.0, rng);
    v /= v.norm();
    for (double r : {1e2, 1e3, 1e4}) {
      TangentAtom big{x, r * v};
      EXPECT_LT(L.value(big) - K * std::pow(c.norm(big), L.p()), -0.9 * std::pow(r, L.p()) * L.multiplier().max() / L.p());
    }
  }
}

TEST(Pairing, Examples) {
  auto e = Chart::euclidean(2);
  ThreePlan dirac;
  dirac.base = DiscreteMeasure::dirac(e.point({0.1, 0.2}));
  dirac.atoms.push_back({0, make_vec({1.0, 2.0}), make_vec({3.0, -1.0}), 1.0});
  EXPECT_DOUBLE_EQ(duality_pairing(e, dirac), 1.0);
  dirac.atoms[0].vec.setZero();
  EXPECT_EQ(duality_pairing(e, dirac), 0.0);

  // product plan of independent fiber distributions against direct summation
  ThreePlan prod;
  prod.base = DiscreteMeasure::dirac(e.point({0.0, 0.0}));
  std::vector<Vec> zs{make_vec({1.0, 0.0}), make_vec({0.5, -1.0})}, vs{make_vec({2.0, 1.0}), make_vec({0.0, 3.0})};
  std::vector<double> wz{0.25, 0.75}, wv{0.6, 0.4};
  double expect = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      prod.atoms.push_back({0, zs[i], vs[j], wz[i] * wv[j]});
      expect += wz[i] * wv[j] * zs[i].dot(vs[j]);
    }
  EXPECT_NEAR(duality_pairing(e, prod), expect, 1e-15);
  EXPECT_TRUE(prod.valid());
  prod.atoms[0].weight += 0.1;
  EXPECT_FALSE(prod.valid());
}

TEST(Pairing, YoungBound) {
  std::mt19937_64 rng(43);
  for (const Chart& c : {Chart::flat_torus({1.0}), Chart::euclidean(2), Chart::sphere2(1.0)})
    for (double p : {1.5, 2.0, 3.0}) {
      auto L = Lagrangian::p_norm(c, p);
      for (int trial = 0; trial < 200; ++trial) {
        ThreePlan plan = random_admissible_plan(L, random_gamma(c, 3, rng), rng);
        EXPECT_LE(duality_pairing(c, plan), pairing_young_bound(c, p, plan) + 1e-12);
      }
      ThreePlan g = graph_plan(L, random_gamma(c, 3, rng));
      EXPECT_NEAR(duality_pairing(c, g), pairing_young_bound(c, p, g), 1e-12);
    }
}

TEST(LiftedLegendre, Properties) {
  std::mt19937_64 rng(44);
  for (const Lagrangian& L : family()) {
    const Chart& c = L.chart();
    CotangentMeasure g = random_gamma(c, 3, rng);
    TangentMeasure s = lifted_legendre_inverse(L, g);
    CotangentMeasure back = lifted_legendre(L, s);
    for (std::size_t i = 0; i < g.size(); ++i)
      EXPECT_LE((back.atoms[i].covec - g.atoms[i].covec).norm(), 1e-9 * (1 + g.atoms[i].covec.norm()));
    if (L.kind() == LagrangianKind::PNorm) EXPECT_NEAR(g.moment(c, L.q()), s.moment(c, L.p()), 1e-12);
    TangentMeasure zero({{c.sample_point(rng), Vec::Zero(c.coord_dim())}}, {1.0});
    EXPECT_EQ(lifted_legendre(L, zero).atoms[0].covec.norm(), 0.0);
  }
}

TEST(Fenchel, GraphPlanAttainsAndRandomPlansStayBelow) {
  std::mt19937_64 rng(45);
  for (const Lagrangian& L : family()) {
    CotangentMeasure g = random_gamma(L.chart(), 3, rng);
    FenchelReport r = check_fenchel_duality(L, g, 1000, rng);
    EXPECT_LE(r.best_gap, 1e-9) << L.name();
    EXPECT_LE(r.max_excess, 1e-9) << L.name();
    EXPECT_LE(r.best_random, r.graph_value + 1e-9);
  }
}

TEST(Fenchel, DiracAndZero) {
  auto t = Chart::flat_torus({1.0});
  auto L = Lagrangian::p_norm(t, 3.0);
  Point x = t.point({0.4});
  CotangentMeasure d({{x, make_vec({2.0})}}, {1.0});
  ThreePlan g = graph_plan(L, d);
  EXPECT_NEAR(g.atoms[0].vec[0], std::sqrt(2.0), 1e-15);
  EXPECT_LE(std::abs(fenchel_value(L, g) - L.hamiltonian(d.atoms[0])), 1e-14);
  CotangentMeasure z({{x, make_vec({0.0})}, {t.point({0.9}), make_vec({0.0})}}, {0.5, 0.5});
  ThreePlan gz = graph_plan(L, z);
  for (const auto& a : gz.atoms) EXPECT_EQ(a.vec.norm(), 0.0);
  EXPECT_EQ(fenchel_value(L, gz), 0.0);
  EXPECT_EQ(relaxed_hamiltonian(L, z), 0.0);
}

TEST(Fenchel, OptimizerCharacterization) {
  std::mt19937_64 rng(46);
  for (const Lagrangian& L : family()) {
    CotangentMeasure g = random_gamma(L.chart(), 3, rng);
    ThreePlan opt = graph_plan(L, g);
    double H = relaxed_hamiltonian(L, g);
    EXPECT_TRUE(concentrated_on_graph(L, opt));
    EXPECT_NEAR(H + relaxed_lagrangian(L, opt.tangent_marginal()), duality_pairing(L.chart(), opt),
                1e-9 * (1 + std::abs(H)));
    for (int trial = 0; trial < 20; ++trial) {
      ThreePlan other = random_admissible_plan(L, g, rng);
      double gap = H + relaxed_lagrangian(L, other.tangent_marginal()) - duality_pairing(L.chart(), other);
      EXPECT_GE(gap, -1e-9);
      EXPECT_FALSE(concentrated_on_graph(L, other));
      EXPECT_GT(gap, 1e-9);
    }
  }
}

TEST(Fenchel, RandomPlansAreAdmissible) {
  std::mt19937_64 rng(47);
  auto L = Lagrangian::perturbed_p_norm(Chart::sphere2(1.0), 2.0, 0.2);
  CotangentMeasure g = random_gamma(L.chart(), 3, rng);
  for (int trial = 0; trial < 50; ++trial) {
    ThreePlan plan = random_admissible_plan(L, g, rng);
    EXPECT_TRUE(plan.valid(1e-12));
    CotangentMeasure m = plan.cotangent_marginal();
    for (std::size_t i = 0; i < g.size(); ++i) {
      double mass = 0.0;
      for (std::size_t k = 0; k < m.size(); ++k)
        if (m.atoms[k].covec == g.atoms[i].covec) mass += m.weights[k];
      EXPECT_NEAR(mass, g.weights[i], 1e-12);
    }
  }
}
