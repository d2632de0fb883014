#pragma once

// Radial Lagrangians L(x,v) = a(x) |v|^p / p with their Legendre maps,
// Hamiltonians and dual energies. PNorm has a == 1; PerturbedPNorm uses a
// smooth positive multiplier field (cosine bump).

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "geohj/error.hpp"
#include "geohj/fixture.hpp"
#include "geohj/manifold.hpp"

namespace geohj {

enum class LagrangianKind { PNorm, PerturbedPNorm };

/// Multiplier field a(x) = 1 + A * bump(x) with |bump| <= 1.
/// Torus/Euclidean: bump = mean_i cos(2 pi x_i / P_i) (P_i = 1 on Euclidean
/// space). Sphere: bump = z / r.
class Multiplier {
 public:
  Multiplier() = default;
  explicit Multiplier(double amplitude) : amplitude_(amplitude) {
    if (!(amplitude >= 0.0 && amplitude < 1.0))
      throw std::invalid_argument("multiplier amplitude must lie in [0, 1)");
  }

  double amplitude() const noexcept { return amplitude_; }
  double min() const noexcept { return 1.0 - amplitude_; }
  double max() const noexcept { return 1.0 + amplitude_; }

  double value(const Chart& c, const Point& x) const {
    if (amplitude_ == 0.0) return 1.0;
    if (c.kind() == ChartKind::Sphere2) return 1.0 + amplitude_ * x.coords[2] / c.radius();
    double s = 0.0;
    for (int i = 0; i < c.dim(); ++i) s += std::cos(2.0 * std::numbers::pi * x.coords[i] / period(c, i));
    return 1.0 + amplitude_ * s / c.dim();
  }

  /// Riemannian gradient (tangent at x).
  Vec gradient(const Chart& c, const Point& x) const {
    Vec g = Vec::Zero(c.coord_dim());
    if (amplitude_ == 0.0) return g;
    if (c.kind() == ChartKind::Sphere2) {
      g[2] = amplitude_ / c.radius();
      return c.project_tangent(x, g);
    }
    for (int i = 0; i < c.dim(); ++i) {
      double k = 2.0 * std::numbers::pi / period(c, i);
      g[i] = -amplitude_ * k * std::sin(k * x.coords[i]) / c.dim();
    }
    return g;
  }

  /// Upper bound on |grad a|.
  double gradient_bound(const Chart& c) const {
    if (c.kind() == ChartKind::Sphere2) return amplitude_ / c.radius();
    double s = 0.0;
    for (int i = 0; i < c.dim(); ++i) s += std::pow(2.0 * std::numbers::pi / period(c, i), 2);
    return amplitude_ * std::sqrt(s) / c.dim();
  }

  /// Upper bound on the operator norm of the Riemannian Hessian of a.
  double hessian_bound(const Chart& c) const {
    if (c.kind() == ChartKind::Sphere2) return amplitude_ / (c.radius() * c.radius());
    double m = 0.0;
    for (int i = 0; i < c.dim(); ++i) m = std::max(m, std::pow(2.0 * std::numbers::pi / period(c, i), 2));
    return amplitude_ * m / c.dim();
  }

 private:
  static double period(const Chart& c, int i) {
    return c.kind() == ChartKind::FlatTorus ? c.periods()[static_cast<std::size_t>(i)] : 1.0;
  }

  double amplitude_ = 0.0;
};

class Lagrangian {
 public:
  static Lagrangian p_norm(const Chart& chart, double p) { return Lagrangian(chart, p, LagrangianKind::PNorm, 0.0); }

  static Lagrangian perturbed_p_norm(const Chart& chart, double p, double amplitude) {
    return Lagrangian(chart, p, LagrangianKind::PerturbedPNorm, amplitude);
  }

  const Chart& chart() const noexcept { return chart_; }
  LagrangianKind kind() const noexcept { return kind_; }
  double p() const noexcept { return p_; }
  double q() const noexcept { return q_; }
  const Multiplier& multiplier() const noexcept { return a_; }

  /// Both families satisfy L(x,0) = 0, L >= 0 and L(x,v) = L(x,-v).
  bool reversible() const noexcept { return true; }
  bool dissipative() const noexcept { return true; }

  std::string name() const {
    char buf[96];
    if (kind_ == LagrangianKind::PNorm)
      std::snprintf(buf, sizeof buf, "p_norm(p=%.17g)", p_);
    else
      std::snprintf(buf, sizeof buf, "perturbed_p_norm(p=%.17g,amplitude=%.17g)", p_, a_.amplitude());
    return buf;
  }

  double a(const Point& x) const { return a_.value(chart_, x); }
  Vec grad_a(const Point& x) const { return a_.gradient(chart_, x); }

  double value(const TangentAtom& t) const { return a(t.base) * std::pow(chart_.norm(t), p_) / p_; }

  /// Fiber derivative dL/dv = a |v|^{p-2} v.
  CotangentAtom legendre(const TangentAtom& t) const {
    double s = chart_.norm(t);
    CotangentAtom c{t.base, Vec::Zero(t.vec.size())};
    if (s == 0.0) return c;
    c.covec = (a(t.base) * std::pow(s, p_ - 2.0)) * t.vec;
    if (fixture::active(fixture::Mutation::LegendreSign)) c.covec = -c.covec;
    return c;
  }

  TangentAtom legendre_inverse(const CotangentAtom& c) const {
    double zn = chart_.dual_norm(c);
    TangentAtom t{c.base, Vec::Zero(c.covec.size())};
    if (zn == 0.0) return t;
    double r = kind_ == LagrangianKind::PNorm ? std::pow(zn, q_ - 1.0) : radial_inverse(a(c.base), zn);
    t.vec = (r / zn) * c.covec;
    return t;
  }

  /// H(x,z) = sup_v z(v) - L(x,v) = a^{1-q} |z|^q / q.
  double hamiltonian(const CotangentAtom& c) const {
    return std::pow(a(c.base), 1.0 - q_) * std::pow(chart_.dual_norm(c), q_) / q_;
  }

  /// H(x, dL/dv(x,v)) = a |v|^p / q.
  double dual_energy(const TangentAtom& t) const { return hamiltonian(legendre(t)); }

  /// Young gap H(x,z) + L(x,v) - z(v); nonnegative, zero iff z = legendre(v).
  double young_gap(const CotangentAtom& c, const TangentAtom& t) const {
    require_same_base(c.base, t.base);
    return hamiltonian(c) + value(t) - chart_.pairing(c, t);
  }

  bool check_legendre_equality(const CotangentAtom& c, const TangentAtom& t, double tol = 1e-9) const {
    double gap = young_gap(c, t);
    double scale = 1.0 + std::abs(hamiltonian(c)) + std::abs(value(t));
    return std::abs(gap) <= tol * scale;
  }

  /// Analytic C(K) = sup_{x,v} K|v| - L(x,v) = K^q a_min^{1-q} / q.
  double superlinearity_constant(double K) const {
    if (K < 0.0) throw std::invalid_argument("superlinearity level must be nonnegative");
    return std::pow(K, q_) * std::pow(a_.min(), 1.0 - q_) / q_;
  }

  /// Empirical max over sampled atoms of K|v| - L(x,v). Tangent vectors are
  /// Gaussian with per-coordinate deviation `scale`.
  template <class Rng>
  double superlinearity_gap(double K, int samples, Rng& rng, double scale = 1.0) const {
    if (K < 0.0) throw std::invalid_argument("superlinearity level must be nonnegative");
    double best = 0.0;
    for (int i = 0; i < samples; ++i) {
      Point x = chart_.sample_point(rng);
      TangentAtom t{x, chart_.sample_tangent(x, scale, rng)};
      best = std::max(best, K * chart_.norm(t) - value(t));
    }
    return best;
  }

 private:
  Lagrangian(const Chart& chart, double p, LagrangianKind kind, double amplitude)
      : chart_(chart), kind_(kind), p_(p), a_(amplitude) {
    if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument("Lagrangian exponent must exceed 1");
    q_ = p / (p - 1.0);
  }

  void require_same_base(const Point& x, const Point& y) const {
    if ((x.coords - y.coords).norm() > 1e-12 * (1.0 + x.coords.norm()))
      throw BaseMismatch("cotangent and tangent atoms have different base points");
  }

  // Solves a r^{p-1} = zn for r >= 0 by safeguarded Newton.
  double radial_inverse(double av, double zn) const {
    auto f = [&](double r) { return av * std::pow(r, p_ - 1.0) - zn; };
    double lo = 0.0, hi = std::max(1.0, std::pow(zn, q_ - 1.0));
    while (f(hi) < 0.0) hi *= 2.0;
    double r = std::pow(zn, q_ - 1.0);
    for (int it = 0; it < 100; ++it) {
      double fr = f(r);
      if (fr < 0.0) lo = r; else hi = r;
      double df = av * (p_ - 1.0) * std::pow(r, p_ - 2.0);
      double next = (df > 0.0 && std::isfinite(df)) ? r - fr / df : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - r) <= 1e-12 * std::max(r, 1e-300)) return next;
      r = next;
    }
    throw NoConvergence("radial Legendre inversion", 100, std::abs(f(r)));
  }

  Chart chart_;
  LagrangianKind kind_;
  double p_ = 2.0;
  double q_ = 2.0;
  Multiplier a_;
};

enum class HamiltonianKind { FromLagrangian, Mechanical };

/// Either the Fenchel transform of a Lagrangian, or the standalone mechanical
/// Hamiltonian |z|^q / q used by the non-convex assumption checks.
class Hamiltonian {
 public:
  static Hamiltonian from_lagrangian(const Lagrangian& L) { return Hamiltonian(L, HamiltonianKind::FromLagrangian); }

  static Hamiltonian mechanical(const Chart& chart, double q) {
    if (!(q > 1.0)) throw std::invalid_argument("Hamiltonian exponent must exceed 1");
    return Hamiltonian(Lagrangian::p_norm(chart, q / (q - 1.0)), HamiltonianKind::Mechanical);
  }

  HamiltonianKind kind() const noexcept { return kind_; }
  const Lagrangian& lagrangian() const noexcept { return L_; }
  const Chart& chart() const noexcept { return L_.chart(); }
  double p() const noexcept { return L_.p(); }
  double q() const noexcept { return L_.q(); }

  double value(const CotangentAtom& c) const { return L_.hamiltonian(c); }

  /// Duality map J_p(x,v) = |v|^{p-2} v.
  CotangentAtom duality_map(const TangentAtom& t) const {
    double s = chart().norm(t);
    if (s == 0.0) return {t.base, Vec::Zero(t.vec.size())};
    return {t.base, std::pow(s, p() - 2.0) * t.vec};
  }

 private:
  Hamiltonian(Lagrangian L, HamiltonianKind k) : L_(std::move(L)), kind_(k) {}

  Lagrangian L_;
  HamiltonianKind kind_;
};

struct NonconvexReport {
  double max_ratio = 0.0;         // Lipschitz-type constant in the Sasaki distance
  double max_ratio_second = 0.0;  // constant of the fiberwise increment bound
  int samples = 0;
};

/// Empirical constants of the non-convex Hamiltonian assumption:
///   |H(x,J v) - H(y,J w)| <= C (1 + |v|^{p-1} + |w|^{p-1}) D_S((x,v),(y,w))
///   |H(x,J v + J w) - H(x,J w)| <= C (1 + |w| + |v|) |v|^{p-1}
/// Ratios with a zero denominator count as 0.
template <class Rng>
NonconvexReport check_nonconvex_assumption(const Hamiltonian& H, int samples, Rng& rng, double scale = 1.0) {
  const Chart& c = H.chart();
  const double p = H.p();
  NonconvexReport rep;
  rep.samples = samples;
  for (int i = 0; i < samples; ++i) {
    Point x = c.sample_point(rng);
    Point y = c.sample_point(rng);
    TangentAtom v{x, c.sample_tangent(x, scale, rng)};
    TangentAtom w{y, c.sample_tangent(y, scale, rng)};
    double num = std::abs(H.value(H.duality_map(v)) - H.value(H.duality_map(w)));
    double den = (1.0 + std::pow(c.norm(v), p - 1.0) + std::pow(c.norm(w), p - 1.0)) * c.sasaki_distance(v, w);
    if (den > 0.0) rep.max_ratio = std::max(rep.max_ratio, num / den);

    TangentAtom w2{x, c.sample_tangent(x, scale, rng)};
    CotangentAtom jv = H.duality_map(v), jw = H.duality_map(w2);
    CotangentAtom sum{x, jv.covec + jw.covec};
    double num2 = std::abs(H.value(sum) - H.value(jw));
    double den2 = (1.0 + c.norm(w2) + c.norm(v)) * std::pow(c.norm(v), p - 1.0);
    if (den2 > 0.0) rep.max_ratio_second = std::max(rep.max_ratio_second, num2 / den2);
  }
  return rep;
}

}  // namespace geohj
