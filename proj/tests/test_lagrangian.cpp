#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "geohj/lagrangian.hpp"

using namespace geohj;

namespace {

std::vector<Lagrangian> family() {
  std::vector<Lagrangian> out;
  for (const Chart& c : {Chart::flat_torus({1.0}), Chart::euclidean(2), Chart::sphere2(1.0)}) {
    for (double p : {1.5, 2.0, 3.0}) {
      out.push_back(Lagrangian::p_norm(c, p));
      out.push_back(Lagrangian::perturbed_p_norm(c, p, 0.2));
    }
  }
  return out;
}

// Fenchel transform by brute force over a dense radial grid along z; the
// maximizer of a radial Lagrangian is parallel to z.
double fenchel_brute(const Lagrangian& L, const CotangentAtom& c) {
  double zn = c.covec.norm();
  if (zn == 0.0) return 0.0;
  Vec dir = c.covec / zn;
  double rmax = 4.0 * std::pow(zn / L.multiplier().min(), L.q() - 1.0) + 1.0;
  double best = 0.0;
  int n = 200000;
  for (int i = 0; i <= n; ++i) {
    double r = rmax * i / n;
    TangentAtom t{c.base, r * dir};
    best = std::max(best, L.chart().pairing(c, t) - L.value(t));
  }
  return best;
}

}  // namespace

TEST(Lagrangian, ValueExamples) {
  auto e = Chart::euclidean(1);
  auto L2 = Lagrangian::p_norm(e, 2.0);
  auto L3 = Lagrangian::p_norm(e, 3.0);
  Point x = e.point({0.0});
  EXPECT_DOUBLE_EQ(L2.value({x, make_vec({2.0})}), 2.0);
  EXPECT_DOUBLE_EQ(L2.value({x, make_vec({0.0})}), 0.0);
  EXPECT_NEAR(L3.value({x, make_vec({1.0})}), 1.0 / 3.0, 1e-15);
  EXPECT_THROW(Lagrangian::p_norm(e, 1.0), std::invalid_argument);
  EXPECT_THROW(Lagrangian::perturbed_p_norm(e, 2.0, 1.0), std::invalid_argument);
}

TEST(Lagrangian, LegendreExamples) {
  auto e = Chart::euclidean(2);
  auto L3 = Lagrangian::p_norm(e, 3.0);
  Point x = e.point({0.3, 0.1});
  CotangentAtom c = L3.legendre({x, make_vec({1.2, 1.6})});
  EXPECT_NEAR(e.dual_norm(c), 4.0, 1e-12);
  EXPECT_EQ(L3.legendre({x, Vec::Zero(2)}).covec.norm(), 0.0);
  auto L2 = Lagrangian::p_norm(e, 2.0);
  Vec v = make_vec({0.7, -0.4});
  EXPECT_EQ(L2.legendre({x, v}).covec, v);
  EXPECT_EQ(L2.legendre_inverse({x, v}).vec, v);
  EXPECT_NEAR(e.norm(L3.legendre_inverse(c)), 2.0, 1e-12);
  EXPECT_EQ(L3.legendre_inverse({x, Vec::Zero(2)}).vec.norm(), 0.0);
}

TEST(Lagrangian, RadialInversionOracle) {
  // invert r -> a r^{p-1} by bisection, independently of the library
  auto t = Chart::flat_torus({1.0});
  for (double p : {1.5, 2.0, 3.0}) {
    auto L = Lagrangian::perturbed_p_norm(t, p, 0.2);
    std::mt19937_64 rng(11);
    for (int i = 0; i < 100; ++i) {
      Point x = t.sample_point(rng);
      double zn = std::uniform_real_distribution<double>(0.01, 5.0)(rng);
      double av = L.a(x);
      double lo = 0.0, hi = 100.0;
      for (int k = 0; k < 200; ++k) {
        double mid = 0.5 * (lo + hi);
        (av * std::pow(mid, p - 1.0) < zn ? lo : hi) = mid;
      }
      TangentAtom v = L.legendre_inverse({x, make_vec({-zn})});
      EXPECT_NEAR(-v.vec[0], 0.5 * (lo + hi), 1e-10 * (1 + lo));
    }
  }
}

TEST(Lagrangian, HamiltonianExamples) {
  auto e = Chart::euclidean(1);
  auto L2 = Lagrangian::p_norm(e, 2.0);
  auto L3 = Lagrangian::p_norm(e, 3.0);
  Point x = e.point({0.0});
  EXPECT_DOUBLE_EQ(L2.hamiltonian({x, make_vec({2.0})}), 2.0);
  EXPECT_DOUBLE_EQ(L2.hamiltonian({x, make_vec({0.0})}), 0.0);
  EXPECT_NEAR(L3.hamiltonian(L3.legendre({x, make_vec({2.0})})), 16.0 / 3.0, 1e-12);
  EXPECT_NEAR(L3.dual_energy({x, make_vec({2.0})}), 16.0 / 3.0, 1e-12);
  EXPECT_NEAR(L2.dual_energy({x, make_vec({2.0})}), 2.0, 1e-15);
  EXPECT_EQ(L2.dual_energy({x, make_vec({0.0})}), 0.0);
}

TEST(Lagrangian, FenchelConsistency) {
  std::mt19937_64 rng(12);
  for (const Lagrangian& L : family()) {
    for (int i = 0; i < 10; ++i) {
      Point x = L.chart().sample_point(rng);
      CotangentAtom c{x, L.chart().sample_tangent(x, 1.0, rng)};
      EXPECT_NEAR(L.hamiltonian(c), fenchel_brute(L, c), 1e-6) << L.name();
    }
  }
}

TEST(Lagrangian, LegendreEqualityAndYoung) {
  std::mt19937_64 rng(13);
  for (const Lagrangian& L : family()) {
    const Chart& ch = L.chart();
    for (int i = 0; i < 1000; ++i) {
      Point x = ch.sample_point(rng);
      TangentAtom t{x, ch.sample_tangent(x, 1.0, rng)};
      CotangentAtom z{x, ch.sample_tangent(x, 1.0, rng)};
      EXPECT_TRUE(L.check_legendre_equality(L.legendre(t), t));
      EXPECT_GE(L.young_gap(z, t), -1e-12);
      EXPECT_NEAR(std::pow(ch.dual_norm(L.legendre(t)), L.q()),
                  std::pow(L.a(x), L.q()) * std::pow(ch.norm(t), L.p()), 1e-9 * (1 + std::pow(ch.norm(t), L.p())));
      TangentAtom back = L.legendre_inverse(L.legendre(t));
      EXPECT_LE((back.vec - t.vec).norm(), 1e-9 * (1 + t.vec.norm()));
      CotangentAtom again = L.legendre(L.legendre_inverse(z));
      EXPECT_LE((again.covec - z.covec).norm(), 1e-9 * (1 + z.covec.norm()));
    }
    Point x = ch.sample_point(rng);
    TangentAtom t{x, ch.sample_tangent(x, 1.0, rng)};
    EXPECT_FALSE(L.check_legendre_equality({x, Vec::Zero(ch.coord_dim())}, t));
  }
}

TEST(Lagrangian, BaseMismatchThrows) {
  auto e = Chart::euclidean(1);
  auto L = Lagrangian::p_norm(e, 2.0);
  EXPECT_THROW(L.check_legendre_equality({e.point({0.0}), make_vec({1.0})}, {e.point({1.0}), make_vec({1.0})}),
               BaseMismatch);
}

TEST(Lagrangian, ReversibleAndDissipative) {
  std::mt19937_64 rng(14);
  for (const Lagrangian& L : family()) {
    const Chart& ch = L.chart();
    for (int i = 0; i < 200; ++i) {
      Point x = ch.sample_point(rng);
      Vec v = ch.sample_tangent(x, 1.0, rng);
      EXPECT_EQ(L.value({x, v}), L.value({x, -v}));
      EXPECT_EQ(L.hamiltonian({x, v}), L.hamiltonian({x, -v}));
      EXPECT_GE(L.value({x, v}), 0.0);
      EXPECT_EQ(L.value({x, Vec::Zero(ch.coord_dim())}), 0.0);
    }
  }
}

TEST(Lagrangian, SuperlinearityGap) {
  auto t = Chart::flat_torus({1.0});
  std::mt19937_64 rng(15);
  auto L2 = Lagrangian::p_norm(t, 2.0);
  EXPECT_LE(L2.superlinearity_gap(1.0, 10000, rng), 0.5 + 1e-9);
  EXPECT_NEAR(L2.superlinearity_gap(1.0, 10000, rng), 0.5, 1e-3);
  EXPECT_EQ(L2.superlinearity_gap(0.0, 1000, rng), 0.0);
  auto L3 = Lagrangian::p_norm(t, 3.0);
  double bound = std::pow(2.0, 1.5) / 1.5;
  EXPECT_NEAR(L3.superlinearity_constant(2.0), bound, 1e-12);
  EXPECT_LE(L3.superlinearity_gap(2.0, 10000, rng, 2.0), bound + 1e-9);
  auto P = Lagrangian::perturbed_p_norm(t, 2.0, 0.2);
  EXPECT_LE(P.superlinearity_gap(1.0, 10000, rng), P.superlinearity_constant(1.0) + 1e-9);
}

TEST(Lagrangian, MultiplierGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(16);
  for (const Chart& c : {Chart::flat_torus({1.0, 2.0}), Chart::euclidean(2), Chart::sphere2(1.5)}) {
    Multiplier a(0.3);
    for (int i = 0; i < 50; ++i) {
      Point x = c.sample_point(rng);
      Vec u = c.sample_tangent(x, 1.0, rng);
      double h = 1e-6;
      double fd = (a.value(c, c.exp(x, h * u)) - a.value(c, c.exp(x, -h * u))) / (2 * h);
      EXPECT_NEAR(fd, a.gradient(c, x).dot(u), 1e-7);
      EXPECT_LE(a.gradient(c, x).norm(), a.gradient_bound(c) + 1e-12);
      EXPECT_GE(a.value(c, x), a.min() - 1e-15);
      EXPECT_LE(a.value(c, x), a.max() + 1e-15);
      // second derivative along the geodesic
      double f0 = a.value(c, x);
      double h2 = 1e-4;
      double dd = (a.value(c, c.exp(x, h2 * u)) - 2 * f0 + a.value(c, c.exp(x, -h2 * u))) / (h2 * h2);
      EXPECT_LE(std::abs(dd), a.hessian_bound(c) * u.squaredNorm() + 1e-5);
    }
  }
}

TEST(Lagrangian, MechanicalAssumptionConstants) {
  for (double q : {1.5, 2.0, 3.0}) {
    auto H = Hamiltonian::mechanical(Chart::flat_torus({1.0}), q);
    std::mt19937_64 rng(17);
    NonconvexReport r = check_nonconvex_assumption(H, 10000, rng);
    EXPECT_LE(r.max_ratio, 2.0 / q + 1e-6);
    EXPECT_TRUE(std::isfinite(r.max_ratio_second));
  }
  auto H2 = Hamiltonian::mechanical(Chart::flat_torus({1.0}), 2.0);
  std::mt19937_64 rng(18);
  NonconvexReport r2 = check_nonconvex_assumption(H2, 10000, rng);
  EXPECT_LE(r2.max_ratio, 1.0);
  // p = 2: the increment <v,w> + |v|^2/2 over (1 + |v| + |w|)|v| stays below 1
  // and approaches it for large parallel atoms, so 1/q is not a valid constant.
  EXPECT_LT(r2.max_ratio_second, 1.0);
  EXPECT_GT(r2.max_ratio_second, 0.5);
  // identical atoms: zero numerator and a zero Sasaki denominator
  auto t = Chart::flat_torus({1.0});
  TangentAtom v{t.point({0.3}), make_vec({0.5})};
  EXPECT_EQ(H2.value(H2.duality_map(v)) - H2.value(H2.duality_map(v)), 0.0);
}
