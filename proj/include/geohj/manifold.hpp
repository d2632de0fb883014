#pragma once

// Concrete Riemannian charts: flat tori, Euclidean spaces and the round
// 2-sphere embedded in R^3. All charts use orthonormal coordinates, so the
// metric and its dual are the Euclidean inner product on coordinate vectors
// and covectors are stored in the same coordinates as vectors.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace geohj {

/// Small coordinate vector; never more than three entries, so no heap use.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 3, 1>;

enum class ChartKind { FlatTorus, Euclidean, Sphere2 };

struct Point {
  Vec coords;
};

struct TangentAtom {
  Point base;
  Vec vec;
};

struct CotangentAtom {
  Point base;
  Vec covec;
};

/// Result of inverting the exponential map. `ambiguous` is set when `y` lies
/// in the cut locus of `x` and the deterministic tie-break picked the
/// direction.
struct LogResult {
  TangentAtom tangent;
  bool ambiguous = false;
};

/// Lower and upper bounds bracketing the Sasaki distance.
struct SasakiBounds {
  double lower = 0.0;
  double upper = 0.0;
};

inline Vec zero_vec(int n) { return Vec::Zero(n); }

inline Vec make_vec(std::initializer_list<double> values) {
  Vec v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

class Chart {
 public:
  static Chart flat_torus(std::vector<double> periods) {
    if (periods.empty() || periods.size() > 3)
      throw std::invalid_argument("flat torus needs 1 to 3 periods");
    for (double p : periods)
      if (!(p > 0.0) || !std::isfinite(p)) throw std::invalid_argument("torus periods must be positive");
    Chart c;
    c.kind_ = ChartKind::FlatTorus;
    c.dim_ = static_cast<int>(periods.size());
    c.periods_ = std::move(periods);
    return c;
  }

  static Chart euclidean(int dim) {
    if (dim < 1 || dim > 3) throw std::invalid_argument("euclidean dimension must be 1, 2 or 3");
    Chart c;
    c.kind_ = ChartKind::Euclidean;
    c.dim_ = dim;
    return c;
  }

  static Chart sphere2(double radius) {
    if (!(radius > 0.0) || !std::isfinite(radius))
      throw std::invalid_argument("sphere radius must be positive");
    Chart c;
    c.kind_ = ChartKind::Sphere2;
    c.dim_ = 2;
    c.radius_ = radius;
    return c;
  }

  ChartKind kind() const noexcept { return kind_; }
  bool is_flat() const noexcept { return kind_ != ChartKind::Sphere2; }
  /// Intrinsic dimension of the manifold.
  int dim() const noexcept { return dim_; }
  /// Length of coordinate vectors (3 for the embedded sphere).
  int coord_dim() const noexcept { return kind_ == ChartKind::Sphere2 ? 3 : dim_; }
  const std::vector<double>& periods() const noexcept { return periods_; }
  double radius() const noexcept { return radius_; }

  std::string name() const {
    switch (kind_) {
      case ChartKind::FlatTorus: {
        std::string s = "flat_torus(";
        for (std::size_t i = 0; i < periods_.size(); ++i) {
          if (i) s += ",";
          s += num(periods_[i]);
        }
        return s + ")";
      }
      case ChartKind::Euclidean: return "euclidean(" + std::to_string(dim_) + ")";
      case ChartKind::Sphere2: return "sphere2(" + num(radius_) + ")";
    }
    return {};
  }

  bool operator==(const Chart& o) const {
    return kind_ == o.kind_ && dim_ == o.dim_ && periods_ == o.periods_ && radius_ == o.radius_;
  }

  /// Builds a point, wrapping torus coordinates into [0, period) and
  /// renormalizing sphere coordinates onto the sphere.
  Point point(const Vec& coords) const {
    if (coords.size() != coord_dim()) throw std::invalid_argument("point has wrong coordinate count");
    if (!coords.allFinite()) throw std::invalid_argument("point has non-finite coordinates");
    Point p{coords};
    switch (kind_) {
      case ChartKind::FlatTorus:
        for (int i = 0; i < dim_; ++i) p.coords[i] = wrap(p.coords[i], periods_[i]);
        break;
      case ChartKind::Euclidean: break;
      case ChartKind::Sphere2: {
        double n = p.coords.norm();
        if (std::abs(n - radius_) > 1e-6 * radius_)
          throw std::invalid_argument("sphere point is not on the sphere");
        p.coords *= radius_ / n;
        break;
      }
    }
    return p;
  }

  Point point(std::initializer_list<double> coords) const { return point(make_vec(coords)); }

  /// Tangent atom at `x`; sphere vectors are projected onto the tangent plane.
  TangentAtom tangent(const Point& x, const Vec& v) const {
    if (v.size() != coord_dim()) throw std::invalid_argument("tangent vector has wrong size");
    return {x, project_tangent(x, v)};
  }

  CotangentAtom cotangent(const Point& x, const Vec& z) const {
    if (z.size() != coord_dim()) throw std::invalid_argument("covector has wrong size");
    return {x, project_tangent(x, z)};
  }

  Vec project_tangent(const Point& x, const Vec& v) const {
    if (kind_ != ChartKind::Sphere2) return v;
    Vec n = x.coords / radius_;
    return v - n.dot(v) * n;
  }

  double norm(const TangentAtom& a) const { return a.vec.norm(); }
  double dual_norm(const CotangentAtom& c) const { return c.covec.norm(); }

  /// Evaluation z(v) of a covector on a vector at the same base point.
  double pairing(const CotangentAtom& c, const TangentAtom& a) const { return c.covec.dot(a.vec); }

  double distance(const Point& x, const Point& y) const {
    switch (kind_) {
      case ChartKind::FlatTorus: {
        double s = 0.0;
        for (int i = 0; i < dim_; ++i) {
          double d = std::abs(wrap_delta(y.coords[i] - x.coords[i], periods_[i]));
          s += d * d;
        }
        return std::sqrt(s);
      }
      case ChartKind::Euclidean: return (y.coords - x.coords).norm();
      case ChartKind::Sphere2: return radius_ * angle(x.coords, y.coords);
    }
    return 0.0;
  }

  /// Largest radius on which exp_x is injective.
  double injectivity_radius() const {
    switch (kind_) {
      case ChartKind::FlatTorus: return 0.5 * *std::min_element(periods_.begin(), periods_.end());
      case ChartKind::Euclidean: return std::numeric_limits<double>::infinity();
      case ChartKind::Sphere2: return std::numbers::pi * radius_;
    }
    return 0.0;
  }

  Point exp(const Point& x, const Vec& v) const {
    switch (kind_) {
      case ChartKind::FlatTorus: return point(x.coords + v);
      case ChartKind::Euclidean: return Point{x.coords + v};
      case ChartKind::Sphere2: {
        Vec w = project_tangent(x, v);
        double s = w.norm();
        if (s == 0.0) return x;
        Vec y = std::cos(s / radius_) * x.coords + (radius_ * std::sin(s / radius_) / s) * w;
        return Point{y * (radius_ / y.norm())};
      }
    }
    return x;
  }

  Point exp(const TangentAtom& a) const { return exp(a.base, a.vec); }

  /// Inverse of exp along the minimizing geodesic. In the cut locus the
  /// direction is chosen by the lowest coordinate index with positive sign:
  /// torus half-period ties resolve to +period/2 in each tied coordinate, and
  /// sphere antipodes use the tangent projection of the first basis vector
  /// e_k that is not (nearly) parallel to x.
  LogResult log(const Point& x, const Point& y) const {
    LogResult r;
    r.tangent.base = x;
    switch (kind_) {
      case ChartKind::FlatTorus: {
        Vec d(dim_);
        for (int i = 0; i < dim_; ++i) {
          double p = periods_[i];
          double di = wrap_delta(y.coords[i] - x.coords[i], p);
          if (std::abs(std::abs(di) - 0.5 * p) <= 1e-12 * p) {
            di = 0.5 * p;
            r.ambiguous = true;
          }
          d[i] = di;
        }
        r.tangent.vec = d;
        return r;
      }
      case ChartKind::Euclidean: r.tangent.vec = y.coords - x.coords; return r;
      case ChartKind::Sphere2: {
        const Vec& a = x.coords;
        const Vec& b = y.coords;
        double theta = angle(a, b);
        Vec n = a / radius_;
        Vec w = b - n.dot(b) * n;
        double wn = w.norm();
        if (theta == 0.0) {
          r.tangent.vec = Vec::Zero(3);
          return r;
        }
        if (wn <= 1e-12 * radius_ && n.dot(b) < 0.0) {
          r.ambiguous = true;
          w = antipodal_direction(n);
          wn = 1.0;
        }
        r.tangent.vec = (radius_ * theta / wn) * w;
        return r;
      }
    }
    return r;
  }

  /// Parallel transport of `a` to `y` along the minimizing geodesic chosen by
  /// `log(a.base, y)`.
  TangentAtom transport(const TangentAtom& a, const Point& y) const {
    if (kind_ != ChartKind::Sphere2) return {y, a.vec};
    LogResult lr = log(a.base, y);
    double d = lr.tangent.vec.norm();
    if (d == 0.0) return {y, a.vec};
    Vec u = lr.tangent.vec / d;
    double theta = d / radius_;
    Vec u_end = -std::sin(theta) * (a.base.coords / radius_) + std::cos(theta) * u;
    Vec out = a.vec + a.vec.dot(u) * (u_end - u);
    return {y, project_tangent(y, out)};
  }

  /// Sasaki distance evaluated on the tie-broken minimizing geodesic:
  /// sqrt(d(x,y)^2 + |w - T(v)|^2). Exact on flat charts, where parallel
  /// transport does not depend on the curve; an upper bound on the sphere.
  double sasaki_distance(const TangentAtom& a, const TangentAtom& b) const {
    double d = distance(a.base, b.base);
    double m = (b.vec - transport(a, b.base).vec).norm();
    return std::hypot(d, m);
  }

  SasakiBounds sasaki_bounds(const TangentAtom& a, const TangentAtom& b) const {
    double d = distance(a.base, b.base);
    double m = (b.vec - transport(a, b.base).vec).norm();
    double gap = std::abs(a.vec.norm() - b.vec.norm());
    return {std::max(d, 0.5 * gap), d + m};
  }

  /// Uniform sample on the fundamental domain: [0, P) per torus coordinate,
  /// [-1, 1]^d for Euclidean space, the uniform measure on the sphere.
  template <class Rng>
  Point sample_point(Rng& rng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Vec c(coord_dim());
    switch (kind_) {
      case ChartKind::FlatTorus:
        for (int i = 0; i < dim_; ++i) c[i] = unif(rng) * periods_[i];
        return point(c);
      case ChartKind::Euclidean:
        for (int i = 0; i < dim_; ++i) c[i] = 2.0 * unif(rng) - 1.0;
        return Point{c};
      case ChartKind::Sphere2: {
        std::normal_distribution<double> g(0.0, 1.0);
        do {
          for (int i = 0; i < 3; ++i) c[i] = g(rng);
        } while (c.norm() < 1e-8);
        return Point{c * (radius_ / c.norm())};
      }
    }
    return Point{c};
  }

  /// Gaussian tangent vector with per-coordinate standard deviation `scale`.
  template <class Rng>
  Vec sample_tangent(const Point& x, double scale, Rng& rng) const {
    std::normal_distribution<double> g(0.0, scale);
    Vec v(coord_dim());
    for (int i = 0; i < coord_dim(); ++i) v[i] = g(rng);
    return project_tangent(x, v);
  }

 private:
  Chart() = default;

  static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }

  static double wrap(double v, double p) {
    double r = std::fmod(v, p);
    if (r < 0.0) r += p;
    if (r >= p) r -= p;
    return r;
  }

  // Representative of v modulo p in [-p/2, p/2].
  static double wrap_delta(double v, double p) { return v - p * std::round(v / p); }

  static double angle(const Vec& a, const Vec& b) {
    Eigen::Vector3d a3(a[0], a[1], a[2]);
    Eigen::Vector3d b3(b[0], b[1], b[2]);
    return std::atan2(a3.cross(b3).norm(), a3.dot(b3));
  }

  static Vec antipodal_direction(const Vec& n) {
    for (int k = 0; k < 3; ++k) {
      Vec e = Vec::Zero(3);
      e[k] = 1.0;
      Vec w = e - n.dot(e) * n;
      if (w.norm() > 0.5) return w / w.norm();
    }
    return Vec::Zero(3);
  }

  ChartKind kind_ = ChartKind::Euclidean;
  int dim_ = 1;
  std::vector<double> periods_;
  double radius_ = 0.0;
};

}  // namespace geohj
