#pragma once

// Smooth potentials on charts and the built-in measure functionals used by
// the Wasserstein doubling: linear, moment, pointwise max of linears and the
// relaxed Hamiltonian of a potential's differential.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "geohj/measure_transport.hpp"
#include "geohj/relaxed_duality.hpp"

namespace geohj {

/// phi(x) = c + <w, x> + sum_k a_k cos(2 pi <n_k, x / P>) + b_k sin(...), with
/// P the chart periods (1 on Euclidean and sphere charts) and x the chart
/// coordinates.
class Potential {
 public:
  struct Mode {
    std::vector<int> frequency;
    double cos_coef = 0.0;
    double sin_coef = 0.0;
  };

  Potential() = default;
  explicit Potential(Chart chart, double constant = 0.0) : chart_(std::move(chart)), constant_(constant) {
    linear_ = Vec::Zero(chart_.coord_dim());
  }

  Potential& add_mode(std::vector<int> frequency, double cos_coef, double sin_coef) {
    if (static_cast<int>(frequency.size()) != chart_.coord_dim())
      throw std::invalid_argument("mode frequency needs one entry per coordinate");
    modes_.push_back({std::move(frequency), cos_coef, sin_coef});
    return *this;
  }

  Potential& set_linear(const Vec& w) {
    if (w.size() != chart_.coord_dim()) throw std::invalid_argument("linear part has the wrong size");
    linear_ = w;
    return *this;
  }

  const Chart& chart() const { return chart_; }
  double constant() const { return constant_; }
  const Vec& linear() const { return linear_; }
  const std::vector<Mode>& modes() const { return modes_; }

  double value(const Point& x) const {
    double v = constant_ + linear_.dot(x.coords);
    for (const Mode& m : modes_) {
      double t = phase(m, x);
      v += m.cos_coef * std::cos(t) + m.sin_coef * std::sin(t);
    }
    return v;
  }

  /// Differential as a covector at x (tangent projection on the sphere).
  CotangentAtom gradient(const Point& x) const {
    Vec g = linear_;
    for (const Mode& m : modes_) {
      double t = phase(m, x);
      double s = -m.cos_coef * std::sin(t) + m.sin_coef * std::cos(t);
      for (int i = 0; i < chart_.coord_dim(); ++i) g[i] += s * 2.0 * std::numbers::pi * m.frequency[i] / period(i);
    }
    return {x, chart_.project_tangent(x, g)};
  }

  /// Upper bound on the norm of the differential.
  double lipschitz_bound() const {
    double b = linear_.norm();
    for (const Mode& m : modes_) {
      double k = 0.0;
      for (int i = 0; i < chart_.coord_dim(); ++i) k += std::pow(2.0 * std::numbers::pi * m.frequency[i] / period(i), 2);
      b += std::sqrt(k) * std::hypot(m.cos_coef, m.sin_coef);
    }
    return b;
  }

 private:
  double period(int i) const {
    if (chart_.kind() == ChartKind::FlatTorus) return chart_.periods()[i];
    return 1.0;
  }

  double phase(const Mode& m, const Point& x) const {
    double t = 0.0;
    for (int i = 0; i < chart_.coord_dim(); ++i) t += m.frequency[i] * x.coords[i] / period(i);
    return 2.0 * std::numbers::pi * t;
  }

  Chart chart_ = Chart::euclidean(1);
  double constant_ = 0.0;
  Vec linear_;
  std::vector<Mode> modes_;
};

/// A finite sum of built-in terms evaluated on discrete measures.
class MeasureFunctional {
 public:
  enum class Kind { Linear, Moment, MaxOfLinears, HamiltonianOfPotential };

  struct Term {
    Kind kind = Kind::Linear;
    double coefficient = 1.0;
    std::vector<Potential> potentials;  // one for Linear and HamiltonianOfPotential, several for MaxOfLinears
    Point center;                       // Moment
    double exponent = 2.0;              // Moment
    std::vector<Lagrangian> hamiltonian;  // HamiltonianOfPotential, at most one entry
  };

  MeasureFunctional() = default;

  static MeasureFunctional zero() { return {}; }

  static MeasureFunctional linear(Potential phi, double coefficient = 1.0) {
    MeasureFunctional f;
    Term t;
    t.kind = Kind::Linear;
    t.coefficient = coefficient;
    t.potentials.push_back(std::move(phi));
    f.terms_.push_back(std::move(t));
    return f;
  }

  static MeasureFunctional moment(Point center, double exponent, double coefficient = 1.0) {
    if (!(exponent > 0.0)) throw std::invalid_argument("moment exponent must be positive");
    MeasureFunctional f;
    Term t;
    t.kind = Kind::Moment;
    t.coefficient = coefficient;
    t.center = std::move(center);
    t.exponent = exponent;
    f.terms_.push_back(std::move(t));
    return f;
  }

  static MeasureFunctional max_of_linears(std::vector<Potential> phis, double coefficient = 1.0) {
    if (phis.empty()) throw std::invalid_argument("max of linears needs at least one potential");
    MeasureFunctional f;
    Term t;
    t.kind = Kind::MaxOfLinears;
    t.coefficient = coefficient;
    t.potentials = std::move(phis);
    f.terms_.push_back(std::move(t));
    return f;
  }

  /// mu -> coefficient * relaxed Hamiltonian of (Id, d phi)_# mu.
  static MeasureFunctional hamiltonian_of(const Lagrangian& L, Potential phi, double coefficient = 1.0) {
    MeasureFunctional f;
    Term t;
    t.kind = Kind::HamiltonianOfPotential;
    t.coefficient = coefficient;
    t.potentials.push_back(std::move(phi));
    t.hamiltonian.push_back(L);
    f.terms_.push_back(std::move(t));
    return f;
  }

  MeasureFunctional& operator+=(const MeasureFunctional& o) {
    terms_.insert(terms_.end(), o.terms_.begin(), o.terms_.end());
    return *this;
  }

  friend MeasureFunctional operator+(MeasureFunctional a, const MeasureFunctional& b) { return a += b; }

  const std::vector<Term>& terms() const { return terms_; }

  double operator()(const Chart& c, const DiscreteMeasure& mu) const {
    double s = 0.0;
    for (const Term& t : terms_) s += t.coefficient * evaluate(c, t, mu);
    return s;
  }

 private:
  static double linear_value(const Potential& phi, const DiscreteMeasure& mu) {
    double s = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) s += mu.weights[i] * phi.value(mu.atoms[i]);
    return s;
  }

  static double evaluate(const Chart& c, const Term& t, const DiscreteMeasure& mu) {
    switch (t.kind) {
      case Kind::Linear:
        return linear_value(t.potentials[0], mu);
      case Kind::Moment: {
        double s = 0.0;
        for (std::size_t i = 0; i < mu.size(); ++i)
          s += mu.weights[i] * std::pow(c.distance(mu.atoms[i], t.center), t.exponent);
        return s;
      }
      case Kind::MaxOfLinears: {
        double m = -std::numeric_limits<double>::infinity();
        for (const Potential& phi : t.potentials) m = std::max(m, linear_value(phi, mu));
        return m;
      }
      case Kind::HamiltonianOfPotential: {
        CotangentMeasure g;
        g.weights = mu.weights;
        for (const Point& x : mu.atoms) g.atoms.push_back(t.potentials[0].gradient(x));
        return relaxed_hamiltonian(t.hamiltonian[0], g);
      }
    }
    return 0.0;
  }

  std::vector<Term> terms_;
};

}  // namespace geohj
