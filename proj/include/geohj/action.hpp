#pragma once

// Action functionals and the minimal-action cost D(eps, x, y).
//
// A path is a uniform time grid with nodes n_0..n_N. The discrete action is
// the midpoint rule
//   A = sum_k dt * L(m_k, log(n_k, n_{k+1}) / dt),
// with m_k the geodesic midpoint of the segment. Minimizers are found by
// Sobolev-preconditioned gradient descent on the interior nodes with an
// exponential-map retraction and Armijo backtracking.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "geohj/config.hpp"
#include "geohj/error.hpp"
#include "geohj/fixture.hpp"
#include "geohj/lagrangian.hpp"
#include "geohj/manifold.hpp"

namespace geohj {

struct DiscretePath {
  double t0 = 0.0;
  double t1 = 1.0;
  std::vector<Point> nodes;

  int steps() const { return static_cast<int>(nodes.size()) - 1; }
  double dt() const { return (t1 - t0) / steps(); }
  const Point& front() const { return nodes.front(); }
  const Point& back() const { return nodes.back(); }
};

struct ActionOptions {
  int nodes = 64;              // initial number of segments
  bool refine = true;          // double the segment count until the value settles
  int max_nodes = 512;
  double refine_tol = 1e-5;    // relative change accepted by refinement
  double energy_tol = 1e-4;    // refinement also continues until the energy spread is below this
  double gradient_tol = 1e-8;  // scaled gradient norm, see ActionResult::residual
  int max_iterations = 5000;
  double armijo = 1e-4;
  double shrink = 0.5;
  bool check_multiplicity = true;
  bool throw_on_failure = true;
};

struct ActionResult {
  double value = 0.0;
  DiscretePath path;
  TangentAtom initial_velocity;
  TangentAtom terminal_velocity;
  CotangentAtom initial_momentum;   // dL/dv at the start: minus the x-derivative of the cost
  CotangentAtom terminal_momentum;  // dL/dv at the end: the y-derivative of the cost
  std::vector<double> energy_trace;  // dual energy on each segment
  bool converged = true;
  bool multiplicity = false;  // a second basin reached an equal value
  int iterations = 0;
  double residual = 0.0;

  /// (max - min) / |mean| of the energy trace; 0 for a constant trace.
  double energy_spread() const;
};

namespace detail {

inline double spread_of(const std::vector<double>& e) {
  if (e.empty()) return 0.0;
  auto [lo, hi] = std::minmax_element(e.begin(), e.end());
  if (*hi - *lo == 0.0) return 0.0;
  double mean = 0.0;
  for (double v : e) mean += v;
  return (*hi - *lo) / std::abs(mean / static_cast<double>(e.size()));
}

struct Segment {
  double cost = 0.0;
  double dist = 0.0;
  double a_mid = 1.0;
  Vec gx, gy;  // cost derivatives, tangent at the two endpoints
};

inline Segment eval_segment(const Lagrangian& L, const Point& x, const Point& y, double dt, bool grad) {
  const Chart& c = L.chart();
  const double p = L.p();
  Segment s;
  Vec u;  // unit direction at x
  Vec u_end;  // unit direction at y
  Point m;
  double mid_scale = 0.5;
  if (c.is_flat()) {
    Vec delta = c.log(x, y).tangent.vec;
    s.dist = delta.norm();
    if (c.kind() == ChartKind::FlatTorus && s.dist >= c.injectivity_radius() * (1.0 - 1e-12) && s.dist > 0.0)
      throw StepTooLarge("path segment reaches the injectivity radius");
    m = Point{x.coords + 0.5 * delta};
    if (grad && s.dist > 0.0) {
      u = delta / s.dist;
      u_end = u;
    }
  } else {
    const double r = c.radius();
    Vec n = x.coords / r;
    Vec w = y.coords - n.dot(y.coords) * n;
    double wn = w.norm();
    double theta = std::atan2(wn / r, n.dot(y.coords) / r);
    s.dist = r * theta;
    Vec sum = x.coords + y.coords;
    double sn = sum.norm();
    if (sn <= 1e-9 * r) throw StepTooLarge("path segment joins antipodal points");
    m = Point{sum * (r / sn)};
    mid_scale = r / sn;
    if (grad && wn > 0.0) {
      u = w / wn;
      u_end = -std::sin(theta) * n + std::cos(theta) * u;
    }
  }
  s.a_mid = L.a(m);
  const double dtp = std::pow(dt, p - 1.0);
  s.cost = s.a_mid * std::pow(s.dist, p) / (p * dtp);
  if (!grad) return s;
  const int n = c.coord_dim();
  s.gx = Vec::Zero(n);
  s.gy = Vec::Zero(n);
  if (s.dist > 0.0) {
    double k1 = s.a_mid * std::pow(s.dist, p - 1.0) / dtp;
    s.gx -= k1 * u;
    s.gy += k1 * u_end;
  }
  if (L.kind() == LagrangianKind::PerturbedPNorm) {
    Vec ga = L.grad_a(m);
    double k2 = std::pow(s.dist, p) / (p * dtp) * mid_scale;
    s.gx += k2 * c.project_tangent(x, ga);
    s.gy += k2 * c.project_tangent(y, ga);
  }
  return s;
}

// Solves tridiag(-1, 2, -1) y = b in place, independently per coordinate.
inline void sobolev_solve(std::vector<Vec>& b) {
  const std::size_t n = b.size();
  if (n == 0) return;
  std::vector<double> cp(n);
  double denom = 2.0;
  cp[0] = -1.0 / denom;
  b[0] /= denom;
  for (std::size_t i = 1; i < n; ++i) {
    denom = 2.0 + cp[i - 1];
    cp[i] = -1.0 / denom;
    b[i] = (b[i] + b[i - 1]) / denom;
  }
  for (std::size_t i = n - 1; i-- > 0;) b[i] -= cp[i] * b[i + 1];
}

struct PathState {
  double value = 0.0;
  std::vector<Vec> grad;  // interior node gradients
  Vec g_first, g_last;    // endpoint derivatives
  std::vector<double> energy;
};

inline PathState eval_path(const Lagrangian& L, const std::vector<Point>& nodes, double dt, bool grad) {
  PathState st;
  const std::size_t N = nodes.size() - 1;
  if (grad) st.grad.assign(N > 0 ? N - 1 : 0, Vec::Zero(L.chart().coord_dim()));
  st.energy.reserve(N);
  for (std::size_t k = 0; k < N; ++k) {
    Segment s = eval_segment(L, nodes[k], nodes[k + 1], dt, grad);
    st.value += s.cost;
    double speed = s.dist / dt;
    st.energy.push_back(s.a_mid * std::pow(speed, L.p()) / L.q());
    if (!grad) continue;
    if (k == 0) st.g_first = s.gx; else st.grad[k - 1] += s.gx;
    if (k + 1 == N) st.g_last = s.gy; else st.grad[k] += s.gy;
  }
  return st;
}

inline std::vector<Point> geodesic_nodes(const Chart& c, const Point& x, const Vec& v, int N) {
  std::vector<Point> nodes;
  nodes.reserve(static_cast<std::size_t>(N) + 1);
  for (int k = 0; k <= N; ++k) nodes.push_back(c.exp(x, (static_cast<double>(k) / N) * v));
  return nodes;
}

inline std::vector<Point> refine_nodes(const Chart& c, const std::vector<Point>& nodes) {
  std::vector<Point> out;
  out.reserve(2 * nodes.size() - 1);
  for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
    out.push_back(nodes[k]);
    out.push_back(c.exp(nodes[k], 0.5 * c.log(nodes[k], nodes[k + 1]).tangent.vec));
  }
  out.push_back(nodes.back());
  return out;
}

// The same endpoints joined the other way around the manifold, if any.
inline bool alternate_direction(const Chart& c, const Vec& v, Vec& out) {
  if (c.kind() == ChartKind::Euclidean) return false;
  if (c.kind() == ChartKind::Sphere2) {
    double d = v.norm();
    if (d == 0.0) return false;
    out = -(2.0 * std::numbers::pi * c.radius() - d) / d * v;
    return true;
  }
  int best = -1;
  double ratio = 0.0;
  for (int i = 0; i < c.dim(); ++i) {
    double r = std::abs(v[i]) / c.periods()[static_cast<std::size_t>(i)];
    if (r > ratio) { ratio = r; best = i; }
  }
  if (best < 0) return false;
  out = v;
  double P = c.periods()[static_cast<std::size_t>(best)];
  out[best] = v[best] > 0.0 ? v[best] - P : v[best] + P;
  return true;
}

struct OptimizeOutcome {
  std::vector<Point> nodes;
  PathState state;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

inline OptimizeOutcome optimize_path(const Lagrangian& L, std::vector<Point> nodes, double eps, const ActionOptions& o) {
  const Chart& c = L.chart();
  const int N = static_cast<int>(nodes.size()) - 1;
  const double dt = eps / N;
  const double p = L.p();
  OptimizeOutcome out;
  PathState st = eval_path(L, nodes, dt, true);

  double length = 0.0;
  for (int k = 0; k < N; ++k) length += c.distance(nodes[k], nodes[k + 1]);
  const double speed = std::max(length / eps, 1e-300);
  const double momentum = L.multiplier().max() * std::pow(speed, p - 1.0);
  const double precond = dt / ((p - 1.0) * std::pow(speed, p - 2.0));

  auto residual_of = [&](const PathState& s) {
    double g = 0.0;
    for (const Vec& v : s.grad) g = std::max(g, v.norm());
    return g * N / momentum;
  };

  // Coordinate round-off bounds the attainable residual on very short paths.
  double coord = 1.0;
  for (const Point& x : nodes) coord = std::max(coord, x.coords.cwiseAbs().maxCoeff());
  const double roundoff = 16.0 * std::max(p - 1.0, 1.0) * N * N * std::numeric_limits<double>::epsilon() * coord /
                          std::max(length, 1e-300);
  const double tol = std::max(o.gradient_tol, roundoff);

  double res = residual_of(st);
  int it = 0;
  for (; it < o.max_iterations && res > tol; ++it) {
    std::vector<Vec> dir = st.grad;
    sobolev_solve(dir);
    double slope = 0.0;
    for (std::size_t k = 0; k < dir.size(); ++k) {
      dir[k] = c.project_tangent(nodes[k + 1], dir[k]) * precond;
      slope += st.grad[k].dot(dir[k]);
    }
    if (!(slope > 0.0)) break;
    double alpha = 1.0;
    bool accepted = false;
    std::vector<Point> trial = nodes;
    PathState tst;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t k = 0; k < dir.size(); ++k) trial[k + 1] = c.exp(nodes[k + 1], -alpha * dir[k]);
      bool ok = true;
      try {
        tst = eval_path(L, trial, dt, true);
      } catch (const StepTooLarge&) {
        ok = false;
      }
      if (ok) {
        if (tst.value <= st.value - o.armijo * alpha * slope) { accepted = true; break; }
        // At round-off level the value cannot certify descent; accept a step
        // that still reduces the gradient.
        if (std::abs(tst.value - st.value) <= 1e-13 * std::abs(st.value) && residual_of(tst) < res) {
          accepted = true;
          break;
        }
      }
      alpha *= o.shrink;
    }
    if (!accepted) break;
    nodes = std::move(trial);
    st = std::move(tst);
    res = residual_of(st);
  }
  out.nodes = std::move(nodes);
  out.state = std::move(st);
  out.iterations = it;
  out.residual = res;
  out.converged = res <= tol;
  return out;
}

inline ActionResult package(const Lagrangian& L, double eps, OptimizeOutcome&& oc) {
  const Chart& c = L.chart();
  ActionResult r;
  r.value = oc.state.value;
  r.path.t0 = 0.0;
  r.path.t1 = eps;
  r.path.nodes = std::move(oc.nodes);
  r.energy_trace = std::move(oc.state.energy);
  r.initial_momentum = {r.path.front(), c.project_tangent(r.path.front(), -oc.state.g_first)};
  r.terminal_momentum = {r.path.back(), c.project_tangent(r.path.back(), oc.state.g_last)};
  r.initial_velocity = L.legendre_inverse(r.initial_momentum);
  r.terminal_velocity = L.legendre_inverse(r.terminal_momentum);
  r.converged = oc.converged;
  r.iterations = oc.iterations;
  r.residual = oc.residual;
  return r;
}

inline ActionResult solve_from(const Lagrangian& L, double eps, std::vector<Point> nodes, const ActionOptions& o) {
  const Chart& c = L.chart();
  OptimizeOutcome oc = optimize_path(L, std::move(nodes), eps, o);
  int total = oc.iterations;
  bool converged = oc.converged;
  if (o.refine) {
    int N = static_cast<int>(oc.nodes.size()) - 1;
    while (2 * N <= o.max_nodes) {
      double prev = oc.state.value;
      OptimizeOutcome fine = optimize_path(L, refine_nodes(c, oc.nodes), eps, o);
      total += fine.iterations;
      converged = fine.converged;
      oc = std::move(fine);
      N *= 2;
      bool settled = std::abs(oc.state.value - prev) <= o.refine_tol * std::max(std::abs(oc.state.value), 1e-300);
      if (settled && spread_of(oc.state.energy) <= o.energy_tol) break;
      if (2 * N > o.max_nodes) converged = false;
    }
  }
  ActionResult r = package(L, eps, std::move(oc));
  r.iterations = total;
  r.converged = converged;
  return r;
}

}  // namespace detail

inline double ActionResult::energy_spread() const { return detail::spread_of(energy_trace); }

/// Midpoint-rule action of a discrete path.
inline double action_value(const Lagrangian& L, const DiscretePath& path) {
  if (path.nodes.size() < 2) throw std::invalid_argument("a path needs at least two nodes");
  if (!(path.t1 > path.t0)) throw std::invalid_argument("path time interval is empty");
  const Chart& c = L.chart();
  double dt = path.dt();
  for (std::size_t k = 0; k + 1 < path.nodes.size(); ++k) {
    LogResult lr = c.log(path.nodes[k], path.nodes[k + 1]);
    if (lr.ambiguous || lr.tangent.vec.norm() >= c.injectivity_radius())
      throw StepTooLarge("consecutive path nodes are not within the injectivity radius");
  }
  return detail::eval_path(L, path.nodes, dt, false).value;
}

/// Constant-speed geodesic from x to y sampled on N segments over [t0, t1].
inline DiscretePath geodesic_path(const Chart& c, const Point& x, const Point& y, double t0, double t1, int N) {
  return {t0, t1, detail::geodesic_nodes(c, x, c.log(x, y).tangent.vec, N)};
}

/// The reparametrization t -> gamma(t / tau), defined on [t0, t0 + tau (t1 - t0)].
inline DiscretePath time_rescale(const DiscretePath& path, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("rescaling factor must be positive");
  return {path.t0, path.t0 + tau * (path.t1 - path.t0), path.nodes};
}

/// Minimal action D(eps, x, y) and a minimizing discrete path.
inline ActionResult minimal_action(const Lagrangian& L, double eps, const Point& x, const Point& y,
                                   const ActionOptions& o = {}) {
  if (!(eps > 0.0)) throw std::invalid_argument("time horizon must be positive");
  if (o.nodes < 2) throw std::invalid_argument("at least two segments are required");
  const Chart& c = L.chart();
  const int N = o.nodes;
  LogResult lr = c.log(x, y);
  if (lr.tangent.vec.norm() == 0.0) {
    ActionResult r;
    r.path = {0.0, eps, std::vector<Point>(static_cast<std::size_t>(N) + 1, x)};
    Vec z = Vec::Zero(c.coord_dim());
    r.initial_velocity = {x, z};
    r.terminal_velocity = {y, z};
    r.initial_momentum = {x, z};
    r.terminal_momentum = {y, z};
    r.energy_trace.assign(static_cast<std::size_t>(N), 0.0);
    return r;
  }
  ActionResult best = detail::solve_from(L, eps, detail::geodesic_nodes(c, x, lr.tangent.vec, N), o);
  Vec alt;
  if (o.check_multiplicity && lr.tangent.vec.norm() >= 0.75 * c.injectivity_radius() &&
      detail::alternate_direction(c, lr.tangent.vec, alt)) {
    ActionResult other = detail::solve_from(L, eps, detail::geodesic_nodes(c, x, alt, N), o);
    if (std::abs(other.value - best.value) <= 1e-6 * std::max(best.value, 1e-300)) {
      best.multiplicity = true;
    } else if (other.value < best.value) {
      best = std::move(other);
    }
  }
  if (!best.converged && o.throw_on_failure)
    throw NoConvergence("minimal action optimizer did not reach the gradient tolerance", best.iterations,
                        best.residual);
  return best;
}

/// Supergradient of D(eps, ., y) at x: minus the Legendre image of the
/// minimizer's initial velocity.
inline CotangentAtom penalization_supergradient(const Lagrangian& L, const ActionResult& r) {
  CotangentAtom c = L.legendre(r.initial_velocity);
  if (!fixture::active(fixture::Mutation::SupergradientSign)) c.covec = -c.covec;
  return c;
}

inline CotangentAtom penalization_supergradient(const Lagrangian& L, double eps, const Point& x, const Point& y,
                                                const ActionOptions& o = {}) {
  return penalization_supergradient(L, minimal_action(L, eps, x, y, o));
}

struct RescalingReport {
  int pairs = 0;
  int violations = 0;
  double min_margin = std::numeric_limits<double>::infinity();  // min of (D(eps) - D(tau eps)) / D(eps)
  bool ok() const { return violations == 0; }
};

/// Strict decrease D(eps, x, y) > D(tau eps, x, y) for tau > 1 and x != y.
inline RescalingReport check_rescaling_monotonicity(const Lagrangian& L, double eps, double tau,
                                                    const std::vector<std::pair<Point, Point>>& pairs,
                                                    const ActionOptions& o = {}) {
  if (!(tau > 1.0)) throw std::invalid_argument("rescaling factor must exceed 1");
  RescalingReport rep;
  for (const auto& [x, y] : pairs) {
    if (L.chart().distance(x, y) == 0.0) continue;
    ++rep.pairs;
    double d0 = minimal_action(L, eps, x, y, o).value;
    double d1 = minimal_action(L, tau * eps, x, y, o).value;
    double margin = (d0 - d1) / d0;
    rep.min_margin = std::min(rep.min_margin, margin);
    if (!(d0 - d1 > 1e-9 * d0)) ++rep.violations;
  }
  return rep;
}

/// C(K) t + D(t, x, y) >= K d(x, y), with the analytic constant C(K).
inline bool gamma_lower_bound(const Lagrangian& L, double t, const Point& x, const Point& y, double K,
                              const ActionOptions& o = {}) {
  double D = minimal_action(L, t, x, y, o).value;
  return L.superlinearity_constant(K) * t + D >= K * L.chart().distance(x, y) - 1e-9;
}

// ---------------------------------------------------------------------------
// Euler-Lagrange flow

namespace detail {

struct PhaseState {
  Vec x, z;
  double action = 0.0;
};

inline PhaseState phase_rhs(const Lagrangian& L, const PhaseState& s) {
  const Chart& c = L.chart();
  Point x{s.x};
  CotangentAtom zc{x, s.z};
  Vec v = L.legendre_inverse(zc).vec;
  double speed = v.norm();
  PhaseState d;
  d.x = v;
  d.z = Vec::Zero(c.coord_dim());
  if (L.kind() == LagrangianKind::PerturbedPNorm)
    d.z = c.project_tangent(x, L.grad_a(x)) * (std::pow(speed, L.p()) / L.p());
  if (c.kind() == ChartKind::Sphere2) d.z -= (s.z.dot(v) / (c.radius() * c.radius())) * s.x;
  d.action = L.a(x) * std::pow(speed, L.p()) / L.p();
  return d;
}

inline PhaseState axpy(const PhaseState& s, double h, const PhaseState& d) {
  return {s.x + h * d.x, s.z + h * d.z, s.action + h * d.action};
}

}  // namespace detail

/// Integrates the Euler-Lagrange flow from (x, v) for time t with `steps`
/// classical RK4 steps in Hamiltonian variables (x, dL/dv). Sphere states are
/// re-projected after every step.
inline ActionResult el_flow(const Lagrangian& L, const TangentAtom& a, double t, int steps = 256) {
  if (!(t > 0.0)) throw std::invalid_argument("flow time must be positive");
  if (steps < 1) throw std::invalid_argument("flow needs at least one step");
  const Chart& c = L.chart();
  const double h = t / steps;
  if (h * c.norm(a) >= c.injectivity_radius())
    throw StepTooLarge("flow step travels beyond the injectivity radius");
  ActionResult r;
  if (c.norm(a) == 0.0) {
    r.path = {0.0, t, std::vector<Point>(static_cast<std::size_t>(steps) + 1, a.base)};
    r.energy_trace.assign(static_cast<std::size_t>(steps) + 1, 0.0);
    r.initial_velocity = r.terminal_velocity = a;
    r.initial_momentum = r.terminal_momentum = {a.base, a.vec};
    return r;
  }
  detail::PhaseState s{a.base.coords, L.legendre(a).covec, 0.0};
  r.path.t0 = 0.0;
  r.path.t1 = t;
  r.path.nodes.reserve(static_cast<std::size_t>(steps) + 1);
  r.path.nodes.push_back(a.base);
  r.energy_trace.reserve(static_cast<std::size_t>(steps) + 1);
  r.energy_trace.push_back(L.hamiltonian({a.base, s.z}));
  for (int i = 0; i < steps; ++i) {
    detail::PhaseState k1 = detail::phase_rhs(L, s);
    detail::PhaseState k2 = detail::phase_rhs(L, detail::axpy(s, 0.5 * h, k1));
    detail::PhaseState k3 = detail::phase_rhs(L, detail::axpy(s, 0.5 * h, k2));
    detail::PhaseState k4 = detail::phase_rhs(L, detail::axpy(s, h, k3));
    s.x += (h / 6.0) * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x);
    s.z += (h / 6.0) * (k1.z + 2.0 * k2.z + 2.0 * k3.z + k4.z);
    s.action += (h / 6.0) * (k1.action + 2.0 * k2.action + 2.0 * k3.action + k4.action);
    if (c.kind() == ChartKind::Sphere2) {
      s.x *= c.radius() / s.x.norm();
      s.z = c.project_tangent(Point{s.x}, s.z);
    }
    Point x = c.kind() == ChartKind::FlatTorus ? c.point(s.x) : Point{s.x};
    r.path.nodes.push_back(x);
    r.energy_trace.push_back(L.hamiltonian({x, s.z}));
  }
  r.value = s.action;
  r.initial_velocity = a;
  r.initial_momentum = L.legendre(a);
  r.terminal_momentum = {r.path.back(), s.z};
  r.terminal_velocity = L.legendre_inverse(r.terminal_momentum);
  return r;
}

/// Lagrangian exponential: position at time eps of the flow started at (x, v).
inline Point lagrangian_exp(const Lagrangian& L, double eps, const TangentAtom& a, int steps = 256) {
  if (L.chart().norm(a) == 0.0) return a.base;
  if (L.kind() == LagrangianKind::PNorm) return L.chart().exp(a.base, eps * a.vec);
  return el_flow(L, a, eps, steps).path.back();
}

// ---------------------------------------------------------------------------
// Shooting

struct ShootingOptions {
  int max_iterations = 50;
  int restarts = 5;
  double tolerance = 1e-11;  // relative to 1 + d(x, y)
  int flow_steps = 256;
  std::uint64_t seed = 0x5eed;
};

namespace detail {

inline std::vector<Vec> tangent_basis(const Chart& c, const Point& x) {
  std::vector<Vec> basis;
  if (c.is_flat()) {
    for (int i = 0; i < c.dim(); ++i) {
      Vec e = Vec::Zero(c.coord_dim());
      e[i] = 1.0;
      basis.push_back(e);
    }
    return basis;
  }
  Vec n = x.coords / c.radius();
  for (int k = 0; k < 3 && basis.size() < 2; ++k) {
    Vec e = Vec::Zero(3);
    e[k] = 1.0;
    Vec w = e - n.dot(e) * n;
    for (const Vec& b : basis) w -= b.dot(w) * b;
    if (w.norm() > 1e-3) basis.push_back(w / w.norm());
  }
  return basis;
}

}  // namespace detail

/// Finds v in T_x M with lagrangian_exp(eps, (x, v)) = y by damped Newton
/// with a finite-difference Jacobian, starting from `guess`, then from
/// random perturbations of it.
inline TangentAtom shoot_velocity(const Lagrangian& L, double eps, const Point& x, const Point& y,
                                  const Vec& guess, const ShootingOptions& o = {}) {
  const Chart& c = L.chart();
  const std::vector<Vec> bx = detail::tangent_basis(c, x);
  const std::vector<Vec> by = detail::tangent_basis(c, y);
  const int n = static_cast<int>(bx.size());
  const double tol = o.tolerance * (1.0 + c.distance(x, y));

  auto coords_of = [&](const Vec& v) {
    Eigen::VectorXd a(n);
    for (int i = 0; i < n; ++i) a[i] = bx[i].dot(v);
    return a;
  };
  auto vec_of = [&](const Eigen::VectorXd& a) {
    Vec v = Vec::Zero(c.coord_dim());
    for (int i = 0; i < n; ++i) v += a[i] * bx[i];
    return v;
  };
  auto residual = [&](const Eigen::VectorXd& a) {
    Point end = lagrangian_exp(L, eps, {x, vec_of(a)}, o.flow_steps);
    Vec r = c.log(y, end).tangent.vec;
    Eigen::VectorXd out(n);
    for (int i = 0; i < n; ++i) out[i] = by[i].dot(r);
    return out;
  };

  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> g(0.0, 1.0);
  double last = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt <= o.restarts; ++attempt) {
    Eigen::VectorXd a = coords_of(c.project_tangent(x, guess));
    if (attempt > 0) {
      double scale = 0.1 * attempt * (a.norm() + c.distance(x, y) / eps + 1e-3);
      for (int i = 0; i < n; ++i) a[i] += scale * g(rng);
    }
    Eigen::VectorXd r;
    try {
      r = residual(a);
    } catch (const StepTooLarge&) {
      continue;
    }
    for (int it = 0; it < o.max_iterations; ++it) {
      last = r.norm();
      if (last <= tol) return {x, vec_of(a)};
      Eigen::MatrixXd J(n, n);
      bool ok = true;
      for (int j = 0; j < n && ok; ++j) {
        double hstep = 1e-7 * (1.0 + a.norm());
        Eigen::VectorXd ap = a, am = a;
        ap[j] += hstep;
        am[j] -= hstep;
        try {
          J.col(j) = (residual(ap) - residual(am)) / (2.0 * hstep);
        } catch (const StepTooLarge&) {
          ok = false;
        }
      }
      if (!ok) break;
      Eigen::VectorXd step = J.colPivHouseholderQr().solve(-r);
      if (!step.allFinite()) break;
      double lambda = 1.0;
      bool improved = false;
      for (int ls = 0; ls < 30; ++ls) {
        Eigen::VectorXd trial = a + lambda * step;
        try {
          Eigen::VectorXd rt = residual(trial);
          if (rt.norm() < r.norm()) {
            a = trial;
            r = rt;
            improved = true;
            break;
          }
        } catch (const StepTooLarge&) {
        }
        lambda *= 0.5;
      }
      if (!improved) break;
    }
    if (r.size() == n && r.norm() <= tol) return {x, vec_of(a)};
  }
  throw ShootingFailed("shooting did not hit the target (residual " + std::to_string(last) + ")", 0, 0);
}

}  // namespace geohj
