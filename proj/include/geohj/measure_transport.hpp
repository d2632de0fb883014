#pragma once

// Finitely supported measures on M, TM and T*M, exact optimal transport with
// distance and minimal-action ground costs, exponential couplings and
// dynamic (path) plans.

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "geohj/action.hpp"
#include "geohj/cost_cache.hpp"
#include "geohj/parallel.hpp"
#include "geohj/transport_solver.hpp"

namespace geohj {

namespace detail {

inline void check_weights(const std::vector<double>& w, std::size_t atoms, const char* what) {
  if (w.size() != atoms) throw std::invalid_argument(std::string(what) + ": one weight per atom is required");
  if (w.empty()) throw std::invalid_argument(std::string(what) + ": empty support");
  double s = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": weights must be nonnegative");
    s += x;
  }
  if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument(std::string(what) + ": weights must sum to 1");
}

}  // namespace detail

struct DiscreteMeasure {
  std::vector<Point> atoms;
  std::vector<double> weights;

  DiscreteMeasure() = default;
  DiscreteMeasure(std::vector<Point> a, std::vector<double> w) : atoms(std::move(a)), weights(std::move(w)) {
    detail::check_weights(weights, atoms.size(), "measure");
  }

  static DiscreteMeasure dirac(const Point& x) { return {{x}, {1.0}}; }
  static DiscreteMeasure uniform(std::vector<Point> a) {
    std::vector<double> w(a.size(), a.empty() ? 0.0 : 1.0 / static_cast<double>(a.size()));
    if (!w.empty()) {
      double s = 0.0;
      for (std::size_t i = 0; i + 1 < w.size(); ++i) s += w[i];
      w.back() = 1.0 - s;
    }
    return {std::move(a), std::move(w)};
  }

  std::size_t size() const { return atoms.size(); }
  Eigen::VectorXd weight_vector() const { return Eigen::Map<const Eigen::VectorXd>(weights.data(), weights.size()); }
};

enum class Fiber { Tangent, Cotangent };

namespace detail {
inline const Point& base_of(const TangentAtom& a) { return a.base; }
inline const Point& base_of(const CotangentAtom& a) { return a.base; }
inline const Vec& fiber_of(const TangentAtom& a) { return a.vec; }
inline const Vec& fiber_of(const CotangentAtom& a) { return a.covec; }
}  // namespace detail

/// A finitely supported measure on TM or T*M.
template <class Atom>
struct LiftedMeasure {
  std::vector<Atom> atoms;
  std::vector<double> weights;

  LiftedMeasure() = default;
  LiftedMeasure(std::vector<Atom> a, std::vector<double> w) : atoms(std::move(a)), weights(std::move(w)) {
    detail::check_weights(weights, atoms.size(), "lifted measure");
  }

  static constexpr Fiber fiber() {
    return std::is_same_v<Atom, TangentAtom> ? Fiber::Tangent : Fiber::Cotangent;
  }

  std::size_t size() const { return atoms.size(); }

  /// Projection onto M. Atoms with identical base points are merged.
  DiscreteMeasure base() const {
    std::vector<Point> pts;
    std::vector<double> w;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      const Point& x = detail::base_of(atoms[i]);
      std::size_t k = 0;
      while (k < pts.size() && pts[k].coords != x.coords) ++k;
      if (k == pts.size()) {
        pts.push_back(x);
        w.push_back(0.0);
      }
      w[k] += weights[i];
    }
    DiscreteMeasure m;
    m.atoms = std::move(pts);
    m.weights = std::move(w);
    return m;
  }

  /// Integral of |fiber|^r: the p-th moment of a tangent lift, or the q-th
  /// moment of a cotangent lift.
  double moment(const Chart& c, double r) const {
    double s = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      double n = fiber() == Fiber::Tangent ? c.norm(TangentAtom{detail::base_of(atoms[i]), detail::fiber_of(atoms[i])})
                                           : c.dual_norm(CotangentAtom{detail::base_of(atoms[i]), detail::fiber_of(atoms[i])});
      s += weights[i] * std::pow(n, r);
    }
    return s;
  }
};

using TangentMeasure = LiftedMeasure<TangentAtom>;
using CotangentMeasure = LiftedMeasure<CotangentAtom>;

struct Coupling {
  DiscreteMeasure row;
  DiscreteMeasure col;
  Eigen::MatrixXd plan;
  double cost = 0.0;

  /// Largest absolute deviation of the plan's marginals from row and col.
  double marginal_error() const {
    double e = (plan.rowwise().sum() - row.weight_vector()).cwiseAbs().maxCoeff();
    return std::max(e, (plan.colwise().sum().transpose() - col.weight_vector()).cwiseAbs().maxCoeff());
  }

  /// Cells carrying positive mass, in row-major order.
  std::vector<std::pair<int, int>> support() const {
    std::vector<std::pair<int, int>> s;
    for (int i = 0; i < plan.rows(); ++i)
      for (int j = 0; j < plan.cols(); ++j)
        if (plan(i, j) > 0.0) s.emplace_back(i, j);
    return s;
  }
};

/// Product coupling mu (x) nu.
inline Coupling independent_coupling(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  return {mu, nu, mu.weight_vector() * nu.weight_vector().transpose(), 0.0};
}

/// A weighted family of paths over [0, eps]. cells[k] records the coupling
/// cell (row atom, column atom) joined by paths[k].
struct DynamicPlan {
  std::vector<DiscretePath> paths;
  std::vector<double> weights;
  std::vector<std::pair<int, int>> cells;
  std::vector<double> actions;  // action of each path

  double action() const {
    double s = 0.0;
    for (std::size_t k = 0; k < actions.size(); ++k) s += weights[k] * actions[k];
    return s;
  }

  /// Marginal deviation of the endpoint pushforwards from mu and nu, with
  /// endpoints matched to atoms by distance.
  double marginal_error(const Chart& c, const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                        double match_tol = 1e-8) const {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(static_cast<int>(mu.size()));
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<int>(nu.size()));
    auto match = [&](const DiscreteMeasure& m, const Point& x) {
      for (std::size_t i = 0; i < m.size(); ++i)
        if (c.distance(m.atoms[i], x) <= match_tol) return static_cast<int>(i);
      return -1;
    };
    for (std::size_t k = 0; k < paths.size(); ++k) {
      int i = match(mu, paths[k].front()), j = match(nu, paths[k].back());
      if (i < 0 || j < 0) return std::numeric_limits<double>::infinity();
      a[i] += weights[k];
      b[j] += weights[k];
    }
    return std::max((a - mu.weight_vector()).cwiseAbs().maxCoeff(), (b - nu.weight_vector()).cwiseAbs().maxCoeff());
  }
};

struct TransportOptions {
  ActionOptions action;
  SimplexOptions simplex;
  int jobs = 0;  // 0: default_jobs()
  bool use_cache = true;
  bool entropic = false;  // approximate solver; never used for exact checks
  SinkhornOptions sinkhorn;
};

// ---------------------------------------------------------------------------
// Ground costs

struct CostTable {
  Eigen::MatrixXd values;
  Eigen::MatrixXi status;  // 1 converged
  bool from_cache = false;

  bool all_converged() const { return (status.array() == 1).all(); }
};

inline std::string cost_table_key(const Lagrangian& L, double eps, const std::vector<Point>& xs,
                                  const std::vector<Point>& ys, const ActionOptions& o) {
  std::string key = L.chart().name() + ";" + L.name();
  char buf[192];
  std::snprintf(buf, sizeof buf, ";eps=%.17g;N=%d;refine=%d;max=%d;rtol=%.3g;etol=%.3g;gtol=%.3g", eps, o.nodes,
                o.refine ? 1 : 0, o.max_nodes, o.refine_tol, o.energy_tol, o.gradient_tol);
  key += buf;
  for (const auto* set : {&xs, &ys}) {
    key += ";[";
    for (const Point& p : *set) {
      key += "(";
      for (int k = 0; k < p.coords.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g,", p.coords[k]);
        key += buf;
      }
      key += ")";
    }
    key += "]";
  }
  return key;
}

/// Table of D(eps, x_i, y_j). Entries are computed in parallel. With
/// throw_on_failure set in the action options, the first NoConvergence is
/// propagated; otherwise failed entries carry status 0.
inline CostTable cost_table(const Lagrangian& L, double eps, const std::vector<Point>& xs,
                            const std::vector<Point>& ys, const TransportOptions& o = {}) {
  const int m = static_cast<int>(xs.size()), n = static_cast<int>(ys.size());
  CostCache cache = o.use_cache ? CostCache::from_environment() : CostCache();
  std::string key;
  if (cache.enabled()) {
    key = cost_table_key(L, eps, xs, ys, o.action);
    if (auto hit = cache.load(key, m, n)) {
      bool ok = !o.action.throw_on_failure || (hit->status.array() == 1).all();
      if (ok) return {hit->values, hit->status, true};
    }
  }
  CostTable t{Eigen::MatrixXd::Zero(m, n), Eigen::MatrixXi::Ones(m, n), false};
  ActionOptions ao = o.action;
  parallel_for(
      static_cast<std::size_t>(m) * static_cast<std::size_t>(n),
      [&](std::size_t k) {
        int i = static_cast<int>(k / static_cast<std::size_t>(n)), j = static_cast<int>(k % static_cast<std::size_t>(n));
        ActionResult r = minimal_action(L, eps, xs[i], ys[j], ao);
        t.values(i, j) = r.value;
        t.status(i, j) = r.converged ? 1 : 0;
      },
      o.jobs);
  if (cache.enabled()) cache.store(key, L.name(), eps, {t.values, t.status});
  return t;
}

// ---------------------------------------------------------------------------
// Optimal transport

struct TransportResult {
  double value = 0.0;
  Coupling coupling;
  CostTable table;
};

inline void require_nonempty(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  if (mu.size() == 0 || nu.size() == 0) throw std::invalid_argument("measures must have nonempty support");
}

inline TransportSolution solve_with(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Eigen::MatrixXd& C,
                                    const TransportOptions& o) {
  if (o.entropic) return solve_transport_entropic(mu.weight_vector(), nu.weight_vector(), C, o.sinkhorn);
  return solve_transport(mu.weight_vector(), nu.weight_vector(), C, o.simplex);
}

/// W_p(mu, nu) and an optimal coupling for the cost d^p.
inline TransportResult wasserstein_p(const Chart& c, double p, const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                     const TransportOptions& o = {}) {
  if (!(p > 1.0)) throw std::invalid_argument("Wasserstein exponent must exceed 1");
  require_nonempty(mu, nu);
  Eigen::MatrixXd C(static_cast<int>(mu.size()), static_cast<int>(nu.size()));
  for (std::size_t i = 0; i < mu.size(); ++i)
    for (std::size_t j = 0; j < nu.size(); ++j) C(i, j) = std::pow(c.distance(mu.atoms[i], nu.atoms[j]), p);
  TransportSolution s = solve_with(mu, nu, C, o);
  TransportResult r;
  r.coupling = {mu, nu, s.plan, s.cost};
  r.value = std::pow(std::max(s.cost, 0.0), 1.0 / p);
  r.table = {C, Eigen::MatrixXi::Ones(C.rows(), C.cols()), false};
  return r;
}

/// D_M(eps, mu, nu): optimal transport with the minimal action as ground cost.
inline TransportResult lagrangian_ot(const Lagrangian& L, double eps, const DiscreteMeasure& mu,
                                     const DiscreteMeasure& nu, const TransportOptions& o = {}) {
  if (!(eps > 0.0)) throw std::invalid_argument("time horizon must be positive");
  require_nonempty(mu, nu);
  TransportResult r;
  r.table = cost_table(L, eps, mu.atoms, nu.atoms, o);
  TransportSolution s = solve_with(mu, nu, r.table.values, o);
  r.coupling = {mu, nu, s.plan, s.cost};
  r.value = s.cost;
  return r;
}

// ---------------------------------------------------------------------------
// Exponential couplings and dynamic plans

/// A tangent lift sigma of the coupling with (Id, exp^L(eps; .))_# sigma equal
/// to it: one atom per support cell, velocity obtained by shooting (closed
/// form for the p-norm family). cells[k] is the coupling cell of atom k.
struct ExponentialCoupling {
  TangentMeasure sigma;
  std::vector<std::pair<int, int>> cells;
};

inline ExponentialCoupling exponential_coupling_from_plan(const Lagrangian& L, double eps, const Coupling& pi,
                                                          const TransportOptions& o = {},
                                                          const ShootingOptions& so = {}) {
  if (!(eps > 0.0)) throw std::invalid_argument("time horizon must be positive");
  const Chart& c = L.chart();
  auto cells = pi.support();
  std::vector<TangentAtom> atoms(cells.size());
  parallel_for(
      cells.size(),
      [&](std::size_t k) {
        auto [i, j] = cells[k];
        const Point& x = pi.row.atoms[i];
        const Point& y = pi.col.atoms[j];
        LogResult lr = c.log(x, y);
        if (lr.tangent.vec.norm() == 0.0) {
          atoms[k] = {x, Vec::Zero(c.coord_dim())};
        } else if (L.kind() == LagrangianKind::PNorm) {
          atoms[k] = {x, lr.tangent.vec / eps};
        } else {
          ActionResult m = minimal_action(L, eps, x, y, o.action);
          try {
            atoms[k] = shoot_velocity(L, eps, x, y, m.initial_velocity.vec, so);
          } catch (const ShootingFailed& e) {
            throw ShootingFailed(e.what(), static_cast<std::size_t>(i), static_cast<std::size_t>(j));
          }
        }
      },
      o.jobs);
  std::vector<double> w;
  double total = 0.0;
  for (auto [i, j] : cells) {
    w.push_back(pi.plan(i, j));
    total += pi.plan(i, j);
  }
  for (double& x : w) x /= total;
  ExponentialCoupling ec;
  ec.sigma.atoms = std::move(atoms);
  ec.sigma.weights = std::move(w);
  ec.cells = std::move(cells);
  return ec;
}

/// Rebuilds the coupling matrix (Id, exp^L(eps; .))_# sigma, matching flowed
/// endpoints to the atoms of nu. Returns an empty matrix if some endpoint is
/// farther than match_tol from every atom.
inline Eigen::MatrixXd pushforward_coupling(const Lagrangian& L, double eps, const TangentMeasure& sigma,
                                            const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                            double match_tol = 1e-8, int flow_steps = 256) {
  const Chart& c = L.chart();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(static_cast<int>(mu.size()), static_cast<int>(nu.size()));
  for (std::size_t k = 0; k < sigma.size(); ++k) {
    const TangentAtom& a = sigma.atoms[k];
    Point y = lagrangian_exp(L, eps, a, flow_steps);
    int bi = -1, bj = -1;
    for (std::size_t i = 0; i < mu.size() && bi < 0; ++i)
      if (c.distance(mu.atoms[i], a.base) <= match_tol) bi = static_cast<int>(i);
    double best = match_tol;
    for (std::size_t j = 0; j < nu.size(); ++j) {
      double d = c.distance(nu.atoms[j], y);
      if (d <= best) {
        best = d;
        bj = static_cast<int>(j);
      }
    }
    if (bi < 0 || bj < 0) return {};
    P(bi, bj) += sigma.weights[k];
  }
  return P;
}

/// Minimizing paths of every support cell of pi, weighted by the plan.
inline DynamicPlan dynamic_plan_from_coupling(const Lagrangian& L, double eps, const Coupling& pi,
                                              const TransportOptions& o = {}) {
  DynamicPlan plan;
  plan.cells = pi.support();
  const std::size_t n = plan.cells.size();
  plan.paths.resize(n);
  plan.actions.resize(n);
  parallel_for(
      n,
      [&](std::size_t k) {
        auto [i, j] = plan.cells[k];
        ActionResult r = minimal_action(L, eps, pi.row.atoms[i], pi.col.atoms[j], o.action);
        plan.actions[k] = action_value(L, r.path);
        plan.paths[k] = std::move(r.path);
      },
      o.jobs);
  for (auto [i, j] : plan.cells) plan.weights.push_back(pi.plan(i, j));
  return plan;
}

/// Euler-Lagrange trajectories of the atoms of sigma over [0, eps]; path
/// actions are integrated along the flow.
inline DynamicPlan dynamic_plan_from_lift(const Lagrangian& L, double eps, const ExponentialCoupling& ec,
                                          int flow_steps = 256, int jobs = 0) {
  DynamicPlan plan;
  const std::size_t n = ec.sigma.size();
  plan.paths.resize(n);
  plan.actions.resize(n);
  parallel_for(
      n,
      [&](std::size_t k) {
        ActionResult r = el_flow(L, ec.sigma.atoms[k], eps, flow_steps);
        plan.actions[k] = r.value;
        plan.paths[k] = std::move(r.path);
      },
      jobs);
  plan.weights = ec.sigma.weights;
  plan.cells = ec.cells;
  return plan;
}

struct EquivalenceReport {
  double d_pairs = 0.0;  // optimal transport with the pairwise cost table
  double d_dyn = 0.0;    // action of the Euler-Lagrange path plan
  double d_expL = 0.0;   // cost of the lift through the Lagrangian exponential
  double max_gap = 0.0;
  double pushforward_error = 0.0;

  bool ok(double rel = 1e-5) const { return max_gap <= rel * (1.0 + std::abs(d_pairs)); }
};

/// The three transport formulations evaluated independently: the LP over
/// pairwise minimal actions, the action of the path plan obtained by flowing
/// the exponential lift, and the lift cost with the minimal action recomputed
/// at the flowed endpoints.
inline EquivalenceReport check_equivalence(const Lagrangian& L, double eps, const DiscreteMeasure& mu,
                                           const DiscreteMeasure& nu, const TransportOptions& o = {},
                                           const ShootingOptions& so = {}) {
  EquivalenceReport rep;
  TransportResult ot = lagrangian_ot(L, eps, mu, nu, o);
  rep.d_pairs = ot.value;
  ExponentialCoupling ec = exponential_coupling_from_plan(L, eps, ot.coupling, o, so);
  rep.d_dyn = dynamic_plan_from_lift(L, eps, ec, so.flow_steps, o.jobs).action();
  std::vector<double> costs(ec.sigma.size());
  parallel_for(
      ec.sigma.size(),
      [&](std::size_t k) {
        const TangentAtom& a = ec.sigma.atoms[k];
        Point y = lagrangian_exp(L, eps, a, so.flow_steps);
        costs[k] = minimal_action(L, eps, a.base, y, o.action).value;
      },
      o.jobs);
  for (std::size_t k = 0; k < costs.size(); ++k) rep.d_expL += ec.sigma.weights[k] * costs[k];
  rep.max_gap = std::max({std::abs(rep.d_pairs - rep.d_dyn), std::abs(rep.d_pairs - rep.d_expL),
                          std::abs(rep.d_dyn - rep.d_expL)});
  Eigen::MatrixXd P = pushforward_coupling(L, eps, ec.sigma, mu, nu, 1e-8, so.flow_steps);
  Eigen::MatrixXd normalized = ot.coupling.plan / ot.coupling.plan.sum();
  rep.pushforward_error = P.size() ? (P - normalized).cwiseAbs().maxCoeff() : std::numeric_limits<double>::infinity();
  return rep;
}

/// D_M(eps, mu, nu) > D_M(tau eps, mu, nu) for tau > 1 and mu != nu.
inline bool check_wdecreasing(const Lagrangian& L, double eps, double tau, const DiscreteMeasure& mu,
                              const DiscreteMeasure& nu, const TransportOptions& o = {}) {
  if (!(tau > 1.0)) throw std::invalid_argument("rescaling factor must exceed 1");
  double d0 = lagrangian_ot(L, eps, mu, nu, o).value;
  double d1 = lagrangian_ot(L, tau * eps, mu, nu, o).value;
  return d0 - d1 > 1e-9 * d0;
}

/// Growth constants (c, C) with L(x, v) >= |v|^p / (c p) - C.
struct GrowthConstants {
  double c = 1.0;
  double C = 0.0;
};

inline GrowthConstants growth_constants(const Lagrangian& L) {
  if (L.kind() == LagrangianKind::PNorm) return {1.0, 0.0};
  return {1.0 / L.multiplier().min(), 0.0};
}

/// D_M(t, mu, nu) >= W_p^p(mu, nu) / (c p t^{p-1}) - t C.
inline bool check_wgamma_bound(const Lagrangian& L, double t, const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                               const TransportOptions& o = {}) {
  GrowthConstants g = growth_constants(L);
  double p = L.p();
  double lhs = lagrangian_ot(L, t, mu, nu, o).value;
  double w = wasserstein_p(L.chart(), p, mu, nu, o).value;
  double rhs = std::pow(w, p) / (g.c * p * std::pow(t, p - 1.0)) - t * g.C;
  return lhs - rhs >= -1e-9 * (1.0 + std::abs(rhs));
}

}  // namespace geohj
