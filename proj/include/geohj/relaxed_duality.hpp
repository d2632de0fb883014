#pragma once

// Relaxed Hamiltonian and Lagrangian on lifted measures, three-plans and the
// duality pairing, the lifted Legendre transform, and a randomized check of
// the Fenchel duality between the relaxed functionals.

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "geohj/measure_transport.hpp"

namespace geohj {

inline double relaxed_hamiltonian(const Lagrangian& L, const CotangentMeasure& g) {
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) s += g.weights[i] * L.hamiltonian(g.atoms[i]);
  return s;
}

inline double relaxed_hamiltonian(const Hamiltonian& H, const CotangentMeasure& g) {
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) s += g.weights[i] * H.value(g.atoms[i]);
  return s;
}

inline double relaxed_lagrangian(const Lagrangian& L, const TangentMeasure& s) {
  double v = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) v += s.weights[i] * L.value(s.atoms[i]);
  return v;
}

/// Atomwise Legendre transform: the pushforward of sigma under dL/dv.
inline CotangentMeasure lifted_legendre(const Lagrangian& L, const TangentMeasure& s) {
  CotangentMeasure g;
  g.weights = s.weights;
  g.atoms.reserve(s.size());
  for (const TangentAtom& a : s.atoms) g.atoms.push_back(L.legendre(a));
  return g;
}

inline TangentMeasure lifted_legendre_inverse(const Lagrangian& L, const CotangentMeasure& g) {
  TangentMeasure s;
  s.weights = g.weights;
  s.atoms.reserve(g.size());
  for (const CotangentAtom& a : g.atoms) s.atoms.push_back(L.legendre_inverse(a));
  return s;
}

/// A coupling of a cotangent and a tangent lift over a common base measure,
/// stored by its disintegration: each atom carries a base index, a covector,
/// a vector and a weight.
struct ThreePlan {
  struct Atom {
    int base = 0;
    Vec covec;
    Vec vec;
    double weight = 0.0;
  };

  DiscreteMeasure base;
  std::vector<Atom> atoms;

  CotangentMeasure cotangent_marginal() const {
    CotangentMeasure g;
    for (const Atom& a : atoms) {
      g.atoms.push_back({base.atoms[a.base], a.covec});
      g.weights.push_back(a.weight);
    }
    return g;
  }

  TangentMeasure tangent_marginal() const {
    TangentMeasure s;
    for (const Atom& a : atoms) {
      s.atoms.push_back({base.atoms[a.base], a.vec});
      s.weights.push_back(a.weight);
    }
    return s;
  }

  /// Largest deviation of the per-base fiber masses from the base weights.
  double base_error() const {
    std::vector<double> m(base.size(), 0.0);
    for (const Atom& a : atoms) m[a.base] += a.weight;
    double e = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) e = std::max(e, std::abs(m[i] - base.weights[i]));
    return e;
  }

  bool valid(double tol = 1e-12) const {
    for (const Atom& a : atoms)
      if (a.base < 0 || a.base >= static_cast<int>(base.size()) || !(a.weight >= 0.0)) return false;
    return base_error() <= tol;
  }
};

/// Integral of z(v) against the plan.
inline double duality_pairing(const Chart& c, const ThreePlan& plan) {
  double s = 0.0;
  for (const auto& a : plan.atoms) {
    const Point& x = plan.base.atoms[a.base];
    s += a.weight * c.pairing({x, a.covec}, {x, a.vec});
  }
  return s;
}

/// Young bound |gamma|_q^q / q + |sigma|_p^p / p on the pairing.
inline double pairing_young_bound(const Chart& c, double p, const ThreePlan& plan) {
  double q = p / (p - 1.0);
  return plan.cotangent_marginal().moment(c, q) / q + plan.tangent_marginal().moment(c, p) / p;
}

/// Pairing minus relaxed Lagrangian of the tangent marginal.
inline double fenchel_value(const Lagrangian& L, const ThreePlan& plan) {
  return duality_pairing(L.chart(), plan) - relaxed_lagrangian(L, plan.tangent_marginal());
}

namespace detail {

// Groups the atoms of a cotangent lift by base point.
inline ThreePlan empty_plan_over(const CotangentMeasure& g, std::vector<int>& base_index) {
  ThreePlan plan;
  plan.base = g.base();
  base_index.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    std::size_t k = 0;
    while (plan.base.atoms[k].coords != g.atoms[i].base.coords) ++k;
    base_index[i] = static_cast<int>(k);
  }
  return plan;
}

}  // namespace detail

/// The plan concentrated on the Legendre graph: each covector z is paired
/// with v = (dL/dv)^{-1}(z).
inline ThreePlan graph_plan(const Lagrangian& L, const CotangentMeasure& g) {
  std::vector<int> idx;
  ThreePlan plan = detail::empty_plan_over(g, idx);
  for (std::size_t i = 0; i < g.size(); ++i)
    plan.atoms.push_back({idx[i], g.atoms[i].covec, L.legendre_inverse(g.atoms[i]).vec, g.weights[i]});
  return plan;
}

/// True if every atom with positive weight satisfies z = dL/dv(v) within tol.
inline bool concentrated_on_graph(const Lagrangian& L, const ThreePlan& plan, double tol = 1e-9) {
  for (const auto& a : plan.atoms) {
    if (a.weight <= 0.0) continue;
    const Point& x = plan.base.atoms[a.base];
    Vec z = L.legendre({x, a.vec}).covec;
    if ((z - a.covec).norm() > tol * (1.0 + a.covec.norm())) return false;
  }
  return true;
}

/// A random plan whose cotangent marginal is g: per base atom, the
/// conditional cotangent fiber is coupled to `fiber_atoms` Gaussian tangent
/// vectors of standard deviation `scale`, by either the product coupling or a
/// vertex of the fiber transport polytope for a random cost.
template <class Rng>
ThreePlan random_admissible_plan(const Lagrangian& L, const CotangentMeasure& g, Rng& rng, double scale = 1.0,
                                 int fiber_atoms = 3) {
  const Chart& c = L.chart();
  std::vector<int> idx;
  ThreePlan plan = detail::empty_plan_over(g, idx);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::exponential_distribution<double> e(1.0);
  for (int b = 0; b < static_cast<int>(plan.base.size()); ++b) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (idx[i] == b) members.push_back(i);
    const Point& x = plan.base.atoms[b];
    const int m = static_cast<int>(members.size()), n = fiber_atoms;
    std::vector<Vec> vs;
    for (int j = 0; j < n; ++j) vs.push_back(c.sample_tangent(x, scale, rng));
    Eigen::VectorXd a(m), w(n);
    for (int i = 0; i < m; ++i) a[i] = g.weights[members[i]];
    for (int j = 0; j < n; ++j) w[j] = e(rng);
    double mass = a.sum();
    if (mass <= 0.0) continue;
    w *= mass / w.sum();
    Eigen::MatrixXd P;
    if (u(rng) < 0.5) {
      P = a * w.transpose() / mass;
    } else {
      Eigen::MatrixXd C(m, n);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) C(i, j) = u(rng);
      P = solve_transport(a, w, C).plan;
    }
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        if (P(i, j) > 0.0) plan.atoms.push_back({b, g.atoms[members[i]].covec, vs[j], P(i, j)});
  }
  return plan;
}

struct FenchelReport {
  double hamiltonian = 0.0;   // relaxed Hamiltonian of gamma
  double graph_value = 0.0;   // pairing minus relaxed Lagrangian on the graph plan
  double best_gap = 0.0;      // |graph_value - hamiltonian|
  double best_random = -std::numeric_limits<double>::infinity();
  double max_excess = -std::numeric_limits<double>::infinity();  // max over random plans of value - hamiltonian
  int trials = 0;

  bool ok(double tol = 1e-9) const { return best_gap <= tol && max_excess <= tol; }
};

/// Compares the relaxed Hamiltonian of g with the supremum of
/// pairing - relaxed Lagrangian: the graph plan attains it and random
/// admissible plans stay below it.
template <class Rng>
FenchelReport check_fenchel_duality(const Lagrangian& L, const CotangentMeasure& g, int trials, Rng& rng,
                                    double scale = 0.0) {
  FenchelReport r;
  r.hamiltonian = relaxed_hamiltonian(L, g);
  ThreePlan opt = graph_plan(L, g);
  r.graph_value = fenchel_value(L, opt);
  r.best_gap = std::abs(r.graph_value - r.hamiltonian);
  if (scale <= 0.0) scale = 0.5 + std::pow(lifted_legendre_inverse(L, g).moment(L.chart(), L.p()), 1.0 / L.p());
  for (int t = 0; t < trials; ++t) {
    ThreePlan plan = random_admissible_plan(L, g, rng, scale);
    double v = fenchel_value(L, plan);
    r.best_random = std::max(r.best_random, v);
    r.max_excess = std::max(r.max_excess, v - r.hamiltonian);
    ++r.trials;
  }
  return r;
}

}  // namespace geohj
