#pragma once

// Doubling of variables: sweeps eps, finds exact maximizers of
// u0(x) - u1(y) - penalization over grid pairs or over a finite family of
// discrete measures, extracts the supergradient pair from the penalization
// minimizer and checks the inequalities used along the way.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "geohj/action.hpp"
#include "geohj/fixture.hpp"
#include "geohj/functionals.hpp"
#include "geohj/hj_grid.hpp"
#include "geohj/measure_transport.hpp"
#include "geohj/parallel.hpp"

namespace geohj {

enum class DoublingMode { Manifold, Wasserstein };

/// d^p / (p eps^(p-1)) (WassersteinPower) or the minimal action D(eps, ., .)
/// of a Lagrangian (LagrangianAction). Both carry a Lagrangian: the p-norm
/// one for WassersteinPower, whose minimizers are the constant-speed
/// geodesics.
class Penalization {
 public:
  enum class Kind { WassersteinPower, LagrangianAction };

  static Penalization wasserstein_power(const Chart& c, double p) {
    return Penalization(Kind::WassersteinPower, Lagrangian::p_norm(c, p));
  }
  static Penalization lagrangian_action(Lagrangian L) { return Penalization(Kind::LagrangianAction, std::move(L)); }

  Kind kind() const { return kind_; }
  double p() const { return L_.p(); }
  const Lagrangian& lagrangian() const { return L_; }
  const Chart& chart() const { return L_.chart(); }
  bool geometric() const { return kind_ == Kind::LagrangianAction; }

  std::string name() const {
    if (kind_ == Kind::WassersteinPower) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "wasserstein_power(p=%g)", p());
      return buf;
    }
    return "lagrangian_action(" + L_.name() + ")";
  }

 private:
  Penalization(Kind k, Lagrangian L) : kind_(k), L_(std::move(L)) {}

  Kind kind_;
  Lagrangian L_;
};

/// 1, 1/2, 1/4, ... down to the last value >= 1e-3, then exactly 1e-3.
inline std::vector<double> default_schedule() {
  std::vector<double> s;
  for (double e = 1.0; e >= 1e-3; e *= 0.5) s.push_back(e);
  if (s.back() != 1e-3) s.push_back(1e-3);
  return s;
}

inline std::vector<double> geometric_schedule(double first, double last, double ratio) {
  if (!(first > 0.0) || !(last > 0.0) || !(last <= first) || !(ratio > 0.0 && ratio < 1.0))
    throw std::invalid_argument("geometric schedule needs first >= last > 0 and a ratio in (0, 1)");
  std::vector<double> s;
  for (double e = first; e >= last * (1.0 - 1e-12); e *= ratio) s.push_back(e);
  if (std::abs(s.back() - last) > 1e-12 * last) s.push_back(last);
  return s;
}

struct DoublingConfig {
  std::vector<double> schedule = default_schedule();
  DoublingMode mode = DoublingMode::Manifold;
  ActionOptions action = fixed_action_options();
  int jobs = 0;

  /// A fixed node count keeps D(eps, ., y) one discrete function across all
  /// grid pairs, so maximizer comparisons are exact.
  static ActionOptions fixed_action_options() {
    ActionOptions o;
    o.nodes = 128;
    o.refine = false;
    o.throw_on_failure = false;
    return o;
  }

  void validate() const {
    if (schedule.size() < 3) throw std::invalid_argument("eps schedule needs at least 3 entries");
    for (std::size_t k = 0; k < schedule.size(); ++k) {
      if (!(schedule[k] > 0.0) || !std::isfinite(schedule[k]))
        throw std::invalid_argument("eps schedule entries must be positive");
      if (k > 0 && !(schedule[k] < schedule[k - 1]))
        throw std::invalid_argument("eps schedule must be strictly decreasing");
    }
  }
};

/// One minimizing path of the penalization with its end data.
struct PenalizationPath {
  int row = 0;  // atom of the first measure (0 in manifold mode)
  int col = 0;
  double weight = 1.0;
  double value = 0.0;     // penalization cost of the pair
  double distance = 0.0;  // d(x, y)
  TangentAtom start;      // gamma'(0) at x
  TangentAtom end;        // gamma'(eps) at y
  TangentAtom reversed;   // initial velocity at y of the path traversed backwards
  CotangentAtom p0;       // supergradient of the penalization in x
  CotangentAtom q1;       // supergradient of the penalization in y
  double max_speed = 0.0;
  double energy_start = 0.0;  // dual energy at x and at y
  double energy_end = 0.0;
  bool converged = true;
};

struct DoublingRecord {
  double eps = 0.0;
  std::size_t first = 0;   // grid node of x, or family index of mu
  std::size_t second = 0;  // grid node of y, or family index of nu
  double phi = 0.0;        // M_eps
  double penalization = 0.0;
  double u0 = 0.0;
  double u1 = 0.0;
  double F0 = std::numeric_limits<double>::quiet_NaN();
  double F1 = std::numeric_limits<double>::quiet_NaN();
  double distance = 0.0;   // d(x, y), or W_p(mu, nu)
  double diagonal_best = 0.0;  // max_x Phi(x, x)
  std::vector<PenalizationPath> paths;
  Coupling coupling;       // Wasserstein mode
  long evaluations = 0;    // exact penalization evaluations spent on the argmax
  int unconverged = 0;

  /// gamma'(0) lift of mu and the reversed lift of nu, weighted by the plan.
  TangentMeasure forward_lift() const {
    TangentMeasure s;
    for (const auto& p : paths) {
      s.atoms.push_back(p.start);
      s.weights.push_back(p.weight);
    }
    return s;
  }
  TangentMeasure backward_lift() const {
    TangentMeasure s;
    for (const auto& p : paths) {
      s.atoms.push_back(p.reversed);
      s.weights.push_back(p.weight);
    }
    return s;
  }
  /// Superdifferential element of u0 at x (resp. U0 at mu).
  CotangentMeasure supergradient() const {
    CotangentMeasure g;
    for (const auto& p : paths) {
      g.atoms.push_back(p.p0);
      g.weights.push_back(p.weight);
    }
    return g;
  }
  /// Subdifferential element of u1 at y (resp. U1 at nu).
  CotangentMeasure subgradient() const {
    CotangentMeasure g;
    for (const auto& p : paths) {
      g.atoms.push_back({p.q1.base, -p.q1.covec});
      g.weights.push_back(p.weight);
    }
    return g;
  }

  /// Dual energy difference at the two ends.
  double delta_h() const {
    double s = 0.0;
    for (const auto& p : paths) s += p.weight * (p.energy_start - p.energy_end);
    return s;
  }
  double energy_scale() const {
    double s = 0.0;
    for (const auto& p : paths) s += p.weight * std::max(std::abs(p.energy_start), std::abs(p.energy_end));
    return s;
  }

  /// (u0 - F0)(x) - (u1 - F1)(y); nonpositive when the comparison inequality
  /// holds at the maximizer.
  double lyapunov() const { return (u0 - F0) - (u1 - F1); }
};

struct DoublingTrace {
  DoublingMode mode = DoublingMode::Manifold;
  Penalization penalization;
  ActionOptions action;
  std::vector<DoublingRecord> records;  // eps descending
  std::optional<GridFunction> u0, u1, F0, F1;
  std::vector<DiscreteMeasure> family;
  double max_u_diff = 0.0;  // max (u0 - u1), or max over the family of U0 - U1
  double max_F_diff = std::numeric_limits<double>::quiet_NaN();

  explicit DoublingTrace(Penalization p) : penalization(std::move(p)) {}
};

namespace detail {

inline double power_penalization(double p, double eps, double d) { return std::pow(d, p) / (p * std::pow(eps, p - 1.0)); }

inline double max_segment_speed(const Chart& c, const DiscretePath& path) {
  double v = 0.0;
  for (int k = 0; k < path.steps(); ++k) v = std::max(v, c.distance(path.nodes[k], path.nodes[k + 1]) / path.dt());
  return v;
}

// Completes the supergradient data of a path from its end velocities.
inline void finish_path(const Lagrangian& L, double eps, PenalizationPath& r) {
  ActionResult fwd;
  fwd.initial_velocity = r.start;
  r.p0 = penalization_supergradient(L, fwd);
  Vec back = fixture::active(fixture::Mutation::DropReversal) ? Vec(r.end.vec) : Vec(-r.end.vec);
  r.reversed = {r.end.base, back};
  ActionResult rev;
  rev.initial_velocity = r.reversed;
  r.q1 = penalization_supergradient(L, rev);
  r.energy_start = L.dual_energy(r.start);
  r.energy_end = L.dual_energy(r.end);
  (void)eps;
}

inline double penalization_value(const Penalization& P, double eps, const Point& x, const Point& y,
                                 const ActionOptions& o, bool* converged = nullptr) {
  if (P.kind() == Penalization::Kind::WassersteinPower)
    return power_penalization(P.p(), eps, P.chart().distance(x, y));
  ActionResult r = minimal_action(P.lagrangian(), eps, x, y, o);
  if (converged) *converged = r.converged;
  return r.value;
}

inline PenalizationPath penalization_path(const Penalization& P, double eps, const Point& x, const Point& y,
                                          const ActionOptions& o) {
  const Chart& c = P.chart();
  const Lagrangian& L = P.lagrangian();
  PenalizationPath r;
  r.distance = c.distance(x, y);
  if (P.kind() == Penalization::Kind::WassersteinPower) {
    r.value = power_penalization(P.p(), eps, r.distance);
    r.start = {x, c.log(x, y).tangent.vec / eps};
    r.end = {y, -c.log(y, x).tangent.vec / eps};
    r.max_speed = r.distance / eps;
  } else {
    ActionResult a = minimal_action(L, eps, x, y, o);
    r.value = a.value;
    r.start = a.initial_velocity;
    r.end = a.terminal_velocity;
    r.max_speed = max_segment_speed(c, a.path);
    r.converged = a.converged;
  }
  finish_path(L, eps, r);
  return r;
}

}  // namespace detail

/// Upper bound lambda * omega(s) on f(exp_x v) - f(x) - p0(v) for the
/// penalization f = pen(., y) at a pair at distance d whose minimizer has
/// maximum speed `speed`, with s = |v|. NaN when no constant is available
/// (curved charts, or the perturbed family with p != 2).
inline double semiconcavity_bound(const Penalization& P, double eps, double d, double speed, double s) {
  const Lagrangian& L = P.lagrangian();
  if (!P.chart().is_flat()) return std::numeric_limits<double>::quiet_NaN();
  const double p = L.p();
  if (L.kind() == LagrangianKind::PNorm) {
    if (p >= 2.0) return (p - 1.0) * std::pow(eps, 1.0 - p) * std::pow(d + s, p - 2.0) * s * s / 2.0;
    return std::pow(eps, 1.0 - p) * std::pow(2.0, 2.0 - p) * std::pow(s, p) / (p - 1.0);
  }
  if (p != 2.0) return std::numeric_limits<double>::quiet_NaN();
  // deformed competitor gamma(t) + (1 - t / eps) v, expanded to second order
  const auto& a = L.multiplier();
  double Ha = a.hessian_bound(P.chart()), Ga = a.gradient_bound(P.chart());
  double w = speed + s / eps;
  return s * s * (Ha * eps * w * w / 12.0 + Ga * (2.0 * speed + s / eps) / 4.0 + a.max() / (2.0 * eps));
}

// ---------------------------------------------------------------------------
// Manifold mode

namespace detail {

// Exact argmax of u0(x) - u1(y) - pen(x, y) over grid pairs for one eps.
// Closed-form penalizations are evaluated everywhere. For the minimal
// action, a_min d^p / (p eps^(p-1)) bounds every discrete action from below
// (Jensen), so pairs whose bound cannot beat the incumbent are skipped.
inline DoublingRecord manifold_entry(const Penalization& P, double eps, const GridFunction& u0, const GridFunction& u1,
                                     const ActionOptions& o) {
  const Chart& c = P.chart();
  const std::size_t n = u0.size();
  std::vector<Point> nodes(n);
  for (std::size_t k = 0; k < n; ++k) nodes[k] = u0.node(k);
  DoublingRecord rec;
  rec.eps = eps;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t bi = 0, bj = 0;
  auto consider = [&](std::size_t i, std::size_t j, double v) {
    if (v > best || (v == best && std::make_pair(i, j) < std::make_pair(bi, bj))) {
      best = v;
      bi = i;
      bj = j;
    }
  };
  double diag = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) diag = std::max(diag, u0[i] - u1[i]);
  rec.diagonal_best = diag;
  if (P.kind() == Penalization::Kind::WassersteinPower) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        consider(i, j, u0[i] - u1[j] - power_penalization(P.p(), eps, c.distance(nodes[i], nodes[j])));
    rec.evaluations = static_cast<long>(n * n);
  } else {
    const double amin = P.lagrangian().multiplier().min();
    struct Cand {
      double bound;
      std::size_t i, j;
    };
    std::vector<Cand> cand;
    for (std::size_t i = 0; i < n; ++i) {
      consider(i, i, u0[i] - u1[i]);
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        double d = c.distance(nodes[i], nodes[j]);
        double ub = u0[i] - u1[j] - amin * power_penalization(P.p(), eps, d);
        cand.push_back({ub, i, j});
      }
    }
    std::sort(cand.begin(), cand.end(), [](const Cand& a, const Cand& b) {
      if (a.bound != b.bound) return a.bound > b.bound;
      return std::make_pair(a.i, a.j) < std::make_pair(b.i, b.j);
    });
    for (const Cand& k : cand) {
      if (k.bound < best - 1e-12 * (1.0 + std::abs(best))) break;
      bool conv = true;
      double v = u0[k.i] - u1[k.j] - penalization_value(P, eps, nodes[k.i], nodes[k.j], o, &conv);
      ++rec.evaluations;
      if (!conv) ++rec.unconverged;
      consider(k.i, k.j, v);
    }
  }
  rec.first = bi;
  rec.second = bj;
  rec.u0 = u0[bi];
  rec.u1 = u1[bj];
  PenalizationPath path = penalization_path(P, eps, nodes[bi], nodes[bj], o);
  rec.penalization = path.value;
  rec.distance = path.distance;
  rec.phi = rec.u0 - rec.u1 - rec.penalization;
  rec.paths.push_back(std::move(path));
  return rec;
}

}  // namespace detail

inline DoublingTrace run_manifold_doubling(const Penalization& P, const GridFunction& u0, const GridFunction& u1,
                                           const GridFunction& F0, const GridFunction& F1,
                                           const DoublingConfig& cfg) {
  cfg.validate();
  u0.require_same(u1);
  u0.require_same(F0);
  u0.require_same(F1);
  if (!(u0.chart() == P.chart())) throw std::invalid_argument("grid functions and penalization live on different charts");
  DoublingTrace t(P);
  t.mode = DoublingMode::Manifold;
  t.action = cfg.action;
  t.records.resize(cfg.schedule.size());
  parallel_for(
      cfg.schedule.size(), [&](std::size_t k) { t.records[k] = detail::manifold_entry(P, cfg.schedule[k], u0, u1, cfg.action); },
      cfg.jobs);
  for (auto& r : t.records) {
    r.F0 = F0[r.first];
    r.F1 = F1[r.second];
  }
  t.max_u_diff = (u0 - u1).max();
  t.max_F_diff = (F0 - F1).max();
  t.u0 = u0;
  t.u1 = u1;
  t.F0 = F0;
  t.F1 = F1;
  return t;
}

// ---------------------------------------------------------------------------
// Wasserstein mode

/// All measures with at most max_atoms atoms on distinct nodes of a uniform
/// grid over the chart's first coordinate, with weights on the simplex mesh
/// of step 1 / (levels - 1). Atoms are listed in increasing node order.
inline std::vector<DiscreteMeasure> simplex_family(const Chart& c, int nodes, int max_atoms, int levels) {
  if (nodes < 1 || max_atoms < 1 || levels < 2) throw std::invalid_argument("family needs nodes, atoms and levels >= 1, 1, 2");
  if (c.kind() != ChartKind::FlatTorus || c.dim() != 1) throw std::invalid_argument("simplex family is built on a circle");
  const int m = levels - 1;
  std::vector<Point> grid;
  for (int i = 0; i < nodes; ++i) grid.push_back(c.point({i * c.periods()[0] / nodes}));
  std::vector<DiscreteMeasure> out;
  for (int k = 1; k <= std::min(max_atoms, nodes); ++k) {
    // compositions of m into k positive parts
    std::vector<std::vector<int>> comps;
    std::vector<int> cur;
    auto rec = [&](auto&& self, int left, int parts) -> void {
      if (parts == 1) {
        cur.push_back(left);
        comps.push_back(cur);
        cur.pop_back();
        return;
      }
      for (int v = 1; v <= left - parts + 1; ++v) {
        cur.push_back(v);
        self(self, left - v, parts - 1);
        cur.pop_back();
      }
    };
    if (k > m) continue;
    rec(rec, m, k);
    std::vector<int> sel(k);
    std::iota(sel.begin(), sel.end(), 0);
    for (;;) {
      for (const auto& w : comps) {
        std::vector<Point> a;
        std::vector<double> wt;
        double s = 0.0;
        for (int i = 0; i < k; ++i) {
          a.push_back(grid[sel[i]]);
          wt.push_back(static_cast<double>(w[i]) / m);
        }
        for (int i = 0; i + 1 < k; ++i) s += wt[i];
        wt.back() = 1.0 - s;
        out.emplace_back(std::move(a), std::move(wt));
      }
      int i = k - 1;
      while (i >= 0 && sel[i] == nodes - k + i) --i;
      if (i < 0) break;
      ++sel[i];
      for (int j = i + 1; j < k; ++j) sel[j] = sel[j - 1] + 1;
    }
  }
  return out;
}

namespace detail {

inline std::size_t atom_id(std::vector<Point>& pts, const Point& x) {
  for (std::size_t k = 0; k < pts.size(); ++k)
    if (pts[k].coords == x.coords) return k;
  pts.push_back(x);
  return pts.size() - 1;
}

inline TransportResult measure_penalization(const Penalization& P, double eps, const DiscreteMeasure& mu,
                                            const DiscreteMeasure& nu, const ActionOptions& o) {
  TransportOptions to;
  to.action = o;
  to.use_cache = false;
  to.jobs = 1;
  if (P.kind() == Penalization::Kind::WassersteinPower) {
    TransportResult r = wasserstein_p(P.chart(), P.p(), mu, nu, to);
    double s = P.p() * std::pow(eps, P.p() - 1.0);
    r.value = r.coupling.cost / s;
    r.coupling.cost = r.value;
    r.table.values /= s;
    return r;
  }
  return lagrangian_ot(P.lagrangian(), eps, mu, nu, to);
}

inline DoublingRecord wasserstein_entry(const Penalization& P, double eps, const std::vector<DiscreteMeasure>& fam,
                                        const std::vector<double>& U0, const std::vector<double>& U1,
                                        const ActionOptions& o) {
  const Chart& c = P.chart();
  std::vector<Point> pts;
  std::vector<std::vector<std::size_t>> ids(fam.size());
  for (std::size_t m = 0; m < fam.size(); ++m)
    for (const Point& x : fam[m].atoms) ids[m].push_back(atom_id(pts, x));
  const std::size_t n = pts.size();
  Eigen::MatrixXd C(static_cast<int>(n), static_cast<int>(n));
  DoublingRecord rec;
  rec.eps = eps;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      bool conv = true;
      C(i, j) = penalization_value(P, eps, pts[i], pts[j], o, &conv);
      if (!conv) ++rec.unconverged;
    }
  double best = -std::numeric_limits<double>::infinity();
  std::size_t bi = 0, bj = 0;
  double diag = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < fam.size(); ++a) {
    diag = std::max(diag, U0[a] - U1[a]);
    for (std::size_t b = 0; b < fam.size(); ++b) {
      Eigen::MatrixXd sub(static_cast<int>(fam[a].size()), static_cast<int>(fam[b].size()));
      for (std::size_t i = 0; i < fam[a].size(); ++i)
        for (std::size_t j = 0; j < fam[b].size(); ++j) sub(i, j) = C(ids[a][i], ids[b][j]);
      double cost = solve_transport(fam[a].weight_vector(), fam[b].weight_vector(), sub).cost;
      double v = U0[a] - U1[b] - cost;
      ++rec.evaluations;
      if (v > best) {
        best = v;
        bi = a;
        bj = b;
      }
    }
  }
  rec.diagonal_best = diag;
  rec.first = bi;
  rec.second = bj;
  rec.u0 = U0[bi];
  rec.u1 = U1[bj];
  const DiscreteMeasure& mu = fam[bi];
  const DiscreteMeasure& nu = fam[bj];
  Eigen::MatrixXd sub(static_cast<int>(mu.size()), static_cast<int>(nu.size()));
  for (std::size_t i = 0; i < mu.size(); ++i)
    for (std::size_t j = 0; j < nu.size(); ++j) sub(i, j) = C(ids[bi][i], ids[bj][j]);
  TransportSolution s = solve_transport(mu.weight_vector(), nu.weight_vector(), sub);
  rec.coupling = {mu, nu, s.plan, s.cost};
  rec.penalization = s.cost;
  rec.phi = rec.u0 - rec.u1 - rec.penalization;
  double wcost = 0.0;
  for (auto [i, j] : rec.coupling.support()) {
    PenalizationPath path = penalization_path(P, eps, mu.atoms[i], nu.atoms[j], o);
    path.row = i;
    path.col = j;
    path.weight = s.plan(i, j);
    wcost += path.weight * std::pow(path.distance, P.p());
    rec.paths.push_back(std::move(path));
  }
  rec.distance = std::pow(wcost, 1.0 / P.p());
  (void)c;
  return rec;
}

}  // namespace detail

inline DoublingTrace run_wasserstein_doubling(const Penalization& P, const MeasureFunctional& U0,
                                              const MeasureFunctional& U1, const std::vector<DiscreteMeasure>& family,
                                              const DoublingConfig& cfg) {
  cfg.validate();
  if (family.empty()) throw std::invalid_argument("measure family is empty");
  const Chart& c = P.chart();
  std::vector<double> v0(family.size()), v1(family.size());
  DoublingTrace t(P);
  t.mode = DoublingMode::Wasserstein;
  t.action = cfg.action;
  t.max_u_diff = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < family.size(); ++m) {
    v0[m] = U0(c, family[m]);
    v1[m] = U1(c, family[m]);
    t.max_u_diff = std::max(t.max_u_diff, v0[m] - v1[m]);
  }
  t.records.resize(cfg.schedule.size());
  parallel_for(
      cfg.schedule.size(),
      [&](std::size_t k) { t.records[k] = detail::wasserstein_entry(P, cfg.schedule[k], family, v0, v1, cfg.action); },
      cfg.jobs);
  t.family = family;
  return t;
}

// ---------------------------------------------------------------------------
// Checks

struct MembershipReport {
  double worst_excess = -std::numeric_limits<double>::infinity();
  double worst_penalization = -std::numeric_limits<double>::infinity();  // sampled penalization increments
  double worst_grid = -std::numeric_limits<double>::infinity();          // u0 / u1 increments to nearby nodes
  int samples = 0;
  bool bounded = true;  // a semiconcavity constant is available

  void add(double e, bool grid) {
    worst_excess = std::max(worst_excess, e);
    (grid ? worst_grid : worst_penalization) = std::max(grid ? worst_grid : worst_penalization, e);
    ++samples;
  }
  bool ok(double tol = 1e-6) const { return !bounded || worst_excess <= tol; }
};

namespace detail {

template <class Rng>
Vec random_tangent(const Chart& c, const Point& x, double scale, Rng& rng) {
  return c.sample_tangent(x, scale, rng);
}

inline double grid_scale(const DoublingTrace& t) {
  if (t.u0) return t.u0->spacing(0);
  const Chart& c = t.penalization.chart();
  return c.kind() == ChartKind::FlatTorus ? c.periods()[0] / 16.0 : 1.0 / 16.0;
}

}  // namespace detail

/// Samples perturbations of each end of the maximizer and measures
/// increment - pairing - lambda omega. Manifold mode perturbs the
/// penalization at random vectors and the grid functions at nearby nodes;
/// Wasserstein mode perturbs the measures along random lifts coupled to the
/// optimal lift by a random three-plan. The first sample is the zero
/// perturbation.
template <class Rng>
MembershipReport verify_supergradient_membership(const DoublingTrace& t, const DoublingRecord& r, int samples, Rng& rng,
                                                 double scale = 0.0) {
  const Penalization& P = t.penalization;
  const Chart& c = P.chart();
  const double eps = r.eps;
  if (scale <= 0.0) scale = 2.0 * detail::grid_scale(t);
  MembershipReport rep;
  auto bound = [&](const PenalizationPath& p, double s) {
    double b = semiconcavity_bound(P, eps, p.distance, p.max_speed, s);
    if (std::isnan(b)) {
      rep.bounded = false;
      return 0.0;
    }
    return b;
  };

  if (t.mode == DoublingMode::Manifold) {
    const PenalizationPath& p = r.paths.front();
    const Point& x = p.start.base;
    const Point& y = p.end.base;
    for (int k = 0; k < samples; ++k) {
      for (int side = 0; side < 2; ++side) {
        const Point& base = side == 0 ? x : y;
        Vec v = k == 0 ? Vec(Vec::Zero(c.coord_dim())) : detail::random_tangent(c, base, scale, rng);
        TangentAtom a{base, v};
        Point moved = c.exp(a);
        double inc = side == 0 ? detail::penalization_value(P, eps, moved, y, t.action) - p.value
                               : detail::penalization_value(P, eps, x, moved, t.action) - p.value;
        const CotangentAtom& g = side == 0 ? p.p0 : p.q1;
        rep.add(inc - c.pairing(g, a) - bound(p, c.norm(a)), false);
      }
    }
    // grid increments: u0(x') - u0(x) <= pen(x', y) - pen(x, y) by maximality
    const GridFunction& u0 = *t.u0;
    const GridFunction& u1 = *t.u1;
    const int reach = 4;
    auto ix = u0.index(r.first), iy = u1.index(r.second);
    const int d = c.dim();
    for (int a0 = -reach; a0 <= reach; ++a0)
      for (int a1 = (d == 2 ? -reach : 0); a1 <= (d == 2 ? reach : 0); ++a1) {
        std::size_t kx = u0.flat(ix[0] + a0, ix[1] + a1), ky = u1.flat(iy[0] + a0, iy[1] + a1);
        TangentAtom vx = c.log(x, u0.node(kx)).tangent, vy = c.log(y, u1.node(ky)).tangent;
        rep.add(u0[kx] - u0[r.first] - c.pairing(p.p0, vx) - bound(p, c.norm(vx)), true);
        CotangentAtom p1{p.q1.base, -p.q1.covec};
        rep.add(c.pairing(p1, vy) - bound(p, c.norm(vy)) - (u1[ky] - u1[r.second]), true);
      }
    return rep;
  }

  // Wasserstein mode
  const DiscreteMeasure& mu = r.coupling.row;
  const DiscreteMeasure& nu = r.coupling.col;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::exponential_distribution<double> ex(1.0);
  const double base_value = r.penalization;
  for (int k = 0; k < samples; ++k) {
    for (int side = 0; side < 2; ++side) {
      const DiscreteMeasure& m = side == 0 ? mu : nu;
      std::vector<Point> atoms;
      std::vector<double> weights;
      double pairing = 0.0, lw = 0.0;
      for (int b = 0; b < static_cast<int>(m.size()); ++b) {
        std::vector<const PenalizationPath*> fiber;
        for (const auto& p : r.paths)
          if ((side == 0 ? p.row : p.col) == b) fiber.push_back(&p);
        if (fiber.empty()) continue;
        const Point& base = m.atoms[b];
        const int nf = static_cast<int>(fiber.size()), nv = 2;
        std::vector<Vec> vs;
        for (int j = 0; j < nv; ++j)
          vs.push_back(k == 0 ? Vec(Vec::Zero(c.coord_dim())) : detail::random_tangent(c, base, scale, rng));
        Eigen::VectorXd a(nf), w(nv);
        for (int i = 0; i < nf; ++i) a[i] = fiber[i]->weight;
        for (int j = 0; j < nv; ++j) w[j] = ex(rng);
        w *= a.sum() / w.sum();
        Eigen::MatrixXd plan;
        if (uni(rng) < 0.5) {
          plan = a * w.transpose() / a.sum();
        } else {
          Eigen::MatrixXd C(nf, nv);
          for (int i = 0; i < nf; ++i)
            for (int j = 0; j < nv; ++j) C(i, j) = uni(rng);
          plan = solve_transport(a, w, C).plan;
        }
        for (int i = 0; i < nf; ++i)
          for (int j = 0; j < nv; ++j) {
            if (plan(i, j) <= 0.0) continue;
            TangentAtom tv{base, vs[j]};
            const CotangentAtom& g = side == 0 ? fiber[i]->p0 : fiber[i]->q1;
            pairing += plan(i, j) * c.pairing(g, tv);
            lw += plan(i, j) * bound(*fiber[i], c.norm(tv));
            atoms.push_back(c.exp(tv));
            weights.push_back(plan(i, j));
          }
      }
      double total = std::accumulate(weights.begin(), weights.end(), 0.0);
      for (double& x : weights) x /= total;
      auto big = std::max_element(weights.begin(), weights.end());
      *big += 1.0 - std::accumulate(weights.begin(), weights.end(), 0.0);
      DiscreteMeasure moved(atoms, weights);
      double v = side == 0 ? detail::measure_penalization(P, eps, moved, nu, t.action).value
                           : detail::measure_penalization(P, eps, mu, moved, t.action).value;
      rep.add(v - base_value - pairing - lw, false);
    }
  }
  return rep;
}

/// |Delta H|: the dual energy at gamma'(0) minus the dual energy at
/// gamma'(eps), weighted by the plan in Wasserstein mode.
inline double verify_hamiltonian_cancellation(const DoublingRecord& r) { return std::abs(r.delta_h()); }

struct LyapunovReport {
  int violations = 0;
  int checked = 0;
  double worst = -std::numeric_limits<double>::infinity();  // max of (u0 - F0)(x) - (u1 - F1)(y)
  double tolerance = 0.0;
  bool ok() const { return violations == 0; }
};

/// u0(x_eps) - u1(y_eps) <= F0(x_eps) - F1(y_eps) at every record. Only
/// manifold traces with the minimal-action penalization are checked.
inline LyapunovReport verify_lyapunov_property(const DoublingTrace& t, double tolerance = 1e-9) {
  LyapunovReport rep;
  rep.tolerance = tolerance;
  if (t.mode != DoublingMode::Manifold || !t.penalization.geometric()) return rep;
  for (const auto& r : t.records) {
    double v = r.lyapunov();
    rep.worst = std::max(rep.worst, v);
    ++rep.checked;
    if (v > tolerance) ++rep.violations;
  }
  return rep;
}

struct VanishingReport {
  double final_eps = 0.0;
  double final_penalization = 0.0;
  double final_distance = 0.0;
  bool monotone_M = true;           // M_eps does not increase as eps decreases
  bool nondecreasing_M = true;      // M_eps does not decrease as eps decreases
  double largest_increase = 0.0;    // max over steps of M_next - M_prev (eps decreasing)
  bool penalization_decreasing = true;  // final penalization <= first
};

inline VanishingReport verify_penalization_vanishing(const DoublingTrace& t, double tol = 1e-10) {
  if (t.records.size() < 3) throw std::invalid_argument("penalization vanishing needs at least 3 records");
  VanishingReport rep;
  const auto& last = t.records.back();
  rep.final_eps = last.eps;
  rep.final_penalization = last.penalization;
  rep.final_distance = last.distance;
  for (std::size_t k = 1; k < t.records.size(); ++k) {
    double step = t.records[k].phi - t.records[k - 1].phi;
    rep.largest_increase = std::max(rep.largest_increase, step);
    if (step > tol * (1.0 + std::abs(t.records[k - 1].phi))) rep.monotone_M = false;
    if (step < -tol * (1.0 + std::abs(t.records[k - 1].phi))) rep.nondecreasing_M = false;
  }
  rep.penalization_decreasing = last.penalization <= t.records.front().penalization + tol;
  return rep;
}

/// Aggregate of every check over a trace.
struct DoublingVerification {
  MembershipReport membership;
  bool membership_asserted = false;  // flat chart, p >= 2, constant available
  double worst_delta_h = 0.0;
  double worst_relative_delta_h = 0.0;
  double max_speed_mismatch = 0.0;  // | |gamma'(0)| - d/eps | and | |gamma'(eps)| - d/eps |, closed-form penalization
  LyapunovReport lyapunov;
  VanishingReport vanishing;
  bool diagonal_ok = true;  // Phi at the maximizer >= Phi on the diagonal
  double energy_tol = 1e-4;
  double membership_tol = 1e-6;

  bool delta_h_ok() const { return worst_relative_delta_h <= energy_tol; }
  bool final_penalization_ok() const { return vanishing.final_eps > 1e-3 * (1 + 1e-12) || vanishing.final_penalization <= 1e-3; }
  bool speeds_ok() const { return max_speed_mismatch <= 1e-9; }
  bool membership_ok() const { return !membership_asserted || membership.worst_excess <= membership_tol; }

  bool ok() const {
    return membership_ok() && delta_h_ok() && speeds_ok() && lyapunov.ok() && vanishing.monotone_M &&
           final_penalization_ok() && diagonal_ok;
  }
};

inline DoublingVerification verify_doubling(const DoublingTrace& t, int samples, std::uint64_t seed,
                                            double lyapunov_tolerance = 1e-9) {
  DoublingVerification v;
  std::mt19937_64 rng(seed);
  const Penalization& P = t.penalization;
  for (const auto& r : t.records) {
    MembershipReport m = verify_supergradient_membership(t, r, samples, rng);
    v.membership.worst_excess = std::max(v.membership.worst_excess, m.worst_excess);
    v.membership.worst_penalization = std::max(v.membership.worst_penalization, m.worst_penalization);
    v.membership.worst_grid = std::max(v.membership.worst_grid, m.worst_grid);
    v.membership.samples += m.samples;
    v.membership.bounded = v.membership.bounded && m.bounded;
    double dh = verify_hamiltonian_cancellation(r);
    v.worst_delta_h = std::max(v.worst_delta_h, dh);
    double scale = r.energy_scale();
    v.worst_relative_delta_h = std::max(v.worst_relative_delta_h, scale > 0.0 ? dh / scale : 0.0);
    if (P.kind() == Penalization::Kind::WassersteinPower && P.chart().is_flat())
      for (const auto& p : r.paths) {
        double target = p.distance / r.eps;
        v.max_speed_mismatch = std::max(v.max_speed_mismatch, std::abs(P.chart().norm(p.start) - target));
        v.max_speed_mismatch = std::max(v.max_speed_mismatch, std::abs(P.chart().norm(p.end) - target));
      }
    if (r.phi < r.diagonal_best - 1e-12 * (1.0 + std::abs(r.diagonal_best))) v.diagonal_ok = false;
  }
  v.membership_asserted = P.chart().is_flat() && P.p() >= 2.0 && v.membership.bounded;
  v.lyapunov = verify_lyapunov_property(t, lyapunov_tolerance);
  v.vanishing = verify_penalization_vanishing(t);
  return v;
}

}  // namespace geohj
