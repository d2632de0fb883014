#pragma once

// Grid functions on flat tori and a semi-Lagrangian solver for the stationary
// equation u + H(x, du) = F with H the Legendre dual of a convex Lagrangian.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "geohj/error.hpp"
#include "geohj/lagrangian.hpp"
#include "geohj/parallel.hpp"

namespace geohj {

class GridFunction {
 public:
  GridFunction(Chart chart, std::vector<int> resolution, std::vector<double> values)
      : chart_(std::move(chart)), res_(std::move(resolution)), values_(std::move(values)) {
    if (chart_.kind() != ChartKind::FlatTorus || chart_.dim() > 2)
      throw std::invalid_argument("grid functions live on 1-D or 2-D flat tori");
    if (static_cast<int>(res_.size()) != chart_.dim()) throw std::invalid_argument("one resolution per dimension");
    std::size_t n = 1;
    for (int r : res_) {
      if (r < 8) throw std::invalid_argument("grid resolution must be at least 8");
      n *= static_cast<std::size_t>(r);
    }
    if (values_.size() != n) throw std::invalid_argument("grid value count does not match the resolution");
    for (double v : values_)
      if (!std::isfinite(v)) throw std::invalid_argument("grid values must be finite");
  }

  static GridFunction sample(const Chart& chart, std::vector<int> resolution,
                             const std::function<double(const Point&)>& f) {
    GridFunction g(chart, resolution, std::vector<double>(count(resolution), 0.0));
    for (std::size_t k = 0; k < g.size(); ++k) g.values_[k] = f(g.node(k));
    return g;
  }

  static GridFunction constant(const Chart& chart, std::vector<int> resolution, double c) {
    return GridFunction(chart, resolution, std::vector<double>(count(resolution), c));
  }

  const Chart& chart() const { return chart_; }
  const std::vector<int>& resolution() const { return res_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t k) const { return values_[k]; }
  double& operator[](std::size_t k) { return values_[k]; }

  double spacing(int d) const { return chart_.periods()[d] / res_[d]; }

  /// Multi-index of node k; dimension 0 varies fastest.
  std::array<int, 2> index(std::size_t k) const {
    std::array<int, 2> i{0, 0};
    i[0] = static_cast<int>(k % static_cast<std::size_t>(res_[0]));
    if (res_.size() > 1) i[1] = static_cast<int>(k / static_cast<std::size_t>(res_[0]));
    return i;
  }

  std::size_t flat(int i0, int i1 = 0) const {
    i0 = ((i0 % res_[0]) + res_[0]) % res_[0];
    if (res_.size() == 1) return static_cast<std::size_t>(i0);
    i1 = ((i1 % res_[1]) + res_[1]) % res_[1];
    return static_cast<std::size_t>(i0) + static_cast<std::size_t>(res_[0]) * static_cast<std::size_t>(i1);
  }

  Point node(std::size_t k) const {
    auto i = index(k);
    Vec x(chart_.dim());
    for (int d = 0; d < chart_.dim(); ++d) x[d] = i[d] * spacing(d);
    return Point{x};
  }

  /// Periodic multilinear interpolation.
  double interpolate(const Point& x) const {
    int d = chart_.dim();
    std::array<int, 2> lo{0, 0};
    std::array<double, 2> t{0.0, 0.0};
    for (int j = 0; j < d; ++j) {
      double s = x.coords[j] / spacing(j);
      double f = std::floor(s);
      lo[j] = static_cast<int>(f);
      t[j] = s - f;
    }
    if (d == 1) return (1 - t[0]) * values_[flat(lo[0])] + t[0] * values_[flat(lo[0] + 1)];
    return (1 - t[0]) * (1 - t[1]) * values_[flat(lo[0], lo[1])] + t[0] * (1 - t[1]) * values_[flat(lo[0] + 1, lo[1])] +
           (1 - t[0]) * t[1] * values_[flat(lo[0], lo[1] + 1)] + t[0] * t[1] * values_[flat(lo[0] + 1, lo[1] + 1)];
  }

  double max() const { return *std::max_element(values_.begin(), values_.end()); }
  double min() const { return *std::min_element(values_.begin(), values_.end()); }

  bool same_grid(const GridFunction& o) const { return chart_ == o.chart_ && res_ == o.res_; }

  GridFunction operator-(const GridFunction& o) const {
    require_same(o);
    GridFunction r = *this;
    for (std::size_t k = 0; k < size(); ++k) r.values_[k] -= o.values_[k];
    return r;
  }

  GridFunction shifted(double c) const {
    GridFunction r = *this;
    for (double& v : r.values_) v += c;
    return r;
  }

  double sup_distance(const GridFunction& o) const {
    require_same(o);
    double e = 0.0;
    for (std::size_t k = 0; k < size(); ++k) e = std::max(e, std::abs(values_[k] - o.values_[k]));
    return e;
  }

  void require_same(const GridFunction& o) const {
    if (!same_grid(o)) throw std::invalid_argument("grid functions live on different grids");
  }

  // CSV: one row per node, coordinates then value.
  void write_csv(std::ostream& out) const {
    out << (chart_.dim() == 1 ? "x0,value\n" : "x0,x1,value\n");
    char buf[32];
    for (std::size_t k = 0; k < size(); ++k) {
      Point x = node(k);
      for (int d = 0; d < chart_.dim(); ++d) {
        std::snprintf(buf, sizeof buf, "%.17g,", x.coords[d]);
        out << buf;
      }
      std::snprintf(buf, sizeof buf, "%.17g", values_[k]);
      out << buf << '\n';
    }
  }

  static GridFunction read_csv(std::istream& in, const Chart& chart, std::vector<int> resolution) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("grid CSV is empty");
    std::vector<double> values;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto pos = line.rfind(',');
      if (pos == std::string::npos) throw ConfigError("malformed grid CSV row: " + line);
      values.push_back(std::stod(line.substr(pos + 1)));
    }
    if (values.size() != count(resolution)) throw ConfigError("grid CSV row count does not match the resolution");
    return GridFunction(chart, std::move(resolution), std::move(values));
  }

  // Binary: "GEOHJGF1", uint32 dim, int32 resolution[dim], float64
  // periods[dim], float64 values[...], little-endian host layout.
  void write_binary(std::ostream& out) const {
    out.write("GEOHJGF1", 8);
    std::uint32_t d = static_cast<std::uint32_t>(chart_.dim());
    out.write(reinterpret_cast<const char*>(&d), sizeof d);
    for (int r : res_) {
      std::int32_t v = r;
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    for (double p : chart_.periods()) out.write(reinterpret_cast<const char*>(&p), sizeof p);
    out.write(reinterpret_cast<const char*>(values_.data()), static_cast<std::streamsize>(values_.size() * sizeof(double)));
  }

  static GridFunction read_binary(std::istream& in) {
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, "GEOHJGF1", 8) != 0) throw ConfigError("not a grid function file");
    std::uint32_t d = 0;
    if (!in.read(reinterpret_cast<char*>(&d), sizeof d) || d < 1 || d > 2)
      throw ConfigError("grid function file has a bad dimension");
    std::vector<int> res(d);
    for (auto& r : res) {
      std::int32_t v = 0;
      if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ConfigError("truncated grid function file");
      r = v;
    }
    std::vector<double> periods(d);
    for (auto& p : periods)
      if (!in.read(reinterpret_cast<char*>(&p), sizeof p)) throw ConfigError("truncated grid function file");
    for (int r : res)
      if (r < 8 || r > (1 << 20)) throw ConfigError("grid function file has a bad resolution");
    std::vector<double> values(count(res));
    if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double))))
      throw ConfigError("truncated grid function file");
    try {
      return GridFunction(Chart::flat_torus(periods), std::move(res), std::move(values));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }

  static std::size_t count(const std::vector<int>& res) {
    std::size_t n = 1;
    for (int r : res) n *= static_cast<std::size_t>(std::max(r, 0));
    return n;
  }

 private:
  Chart chart_;
  std::vector<int> res_;
  std::vector<double> values_;
};

struct SolveOptions {
  double tolerance = 1e-10;      // a posteriori bound on the distance to the discrete fixed point
  int max_iterations = 2000000;
  double vmax = 0.0;             // 0: derived from F, see velocity_bound
  double vmax_multiplier = 2.0;
  int velocities = 33;           // stencil points per dimension
  double step_factor = 0.2;      // h = step_factor * spacing / vmax
  bool self_check = true;        // re-solve with a doubled velocity range
  int jobs = 1;
};

struct SolveReport {
  int iterations = 0;
  double residual = 0.0;            // last sup-norm update
  double error_bound = 0.0;         // residual (1 - h) / h
  double contraction_factor = 0.0;  // max observed ratio of successive updates
  double step = 0.0;
  double vmax = 0.0;
  double vmax_check = -1.0;         // sup change when the velocity range is doubled; -1 if not run
};

struct SolveResult {
  GridFunction u;
  SolveReport report;
};

namespace detail {

// Precomputed semi-Lagrangian stencil: for each node and velocity, the
// running cost h L(x, v) and the interpolation nodes/weights of x + h v.
struct Stencil {
  double h = 0.0;
  int velocities = 0;
  int corners = 0;
  std::vector<double> cost;            // nodes * velocities
  std::vector<std::uint32_t> idx;      // nodes * velocities * corners
  std::vector<double> wt;
};

inline Stencil build_stencil(const Lagrangian& L, const GridFunction& g, double vmax, int per_dim, double h) {
  const Chart& c = g.chart();
  const int d = c.dim();
  Stencil s;
  s.h = h;
  s.corners = d == 1 ? 2 : 4;
  std::vector<Vec> vs;
  for (int a = 0; a < per_dim; ++a)
    for (int b = 0; b < (d == 2 ? per_dim : 1); ++b) {
      Vec v(d);
      v[0] = per_dim == 1 ? 0.0 : -vmax + 2.0 * vmax * a / (per_dim - 1);
      if (d == 2) v[1] = per_dim == 1 ? 0.0 : -vmax + 2.0 * vmax * b / (per_dim - 1);
      vs.push_back(v);
    }
  s.velocities = static_cast<int>(vs.size());
  const std::size_t n = g.size(), nv = vs.size();
  s.cost.resize(n * nv);
  s.idx.resize(n * nv * static_cast<std::size_t>(s.corners));
  s.wt.resize(s.idx.size());
  for (std::size_t k = 0; k < n; ++k) {
    Point x = g.node(k);
    auto i = g.index(k);
    for (std::size_t j = 0; j < nv; ++j) {
      s.cost[k * nv + j] = h * L.value({x, vs[j]});
      std::array<int, 2> lo{0, 0};
      std::array<double, 2> t{0.0, 0.0};
      for (int e = 0; e < d; ++e) {
        double shift = h * vs[j][e] / g.spacing(e);
        double f = std::floor(shift);
        lo[e] = i[e] + static_cast<int>(f);
        t[e] = shift - f;
      }
      std::size_t base = (k * nv + j) * static_cast<std::size_t>(s.corners);
      if (d == 1) {
        s.idx[base] = static_cast<std::uint32_t>(g.flat(lo[0]));
        s.idx[base + 1] = static_cast<std::uint32_t>(g.flat(lo[0] + 1));
        s.wt[base] = 1 - t[0];
        s.wt[base + 1] = t[0];
      } else {
        s.idx[base] = static_cast<std::uint32_t>(g.flat(lo[0], lo[1]));
        s.idx[base + 1] = static_cast<std::uint32_t>(g.flat(lo[0] + 1, lo[1]));
        s.idx[base + 2] = static_cast<std::uint32_t>(g.flat(lo[0], lo[1] + 1));
        s.idx[base + 3] = static_cast<std::uint32_t>(g.flat(lo[0] + 1, lo[1] + 1));
        s.wt[base] = (1 - t[0]) * (1 - t[1]);
        s.wt[base + 1] = t[0] * (1 - t[1]);
        s.wt[base + 2] = (1 - t[0]) * t[1];
        s.wt[base + 3] = t[0] * t[1];
      }
    }
  }
  return s;
}

inline void apply_stencil(const Stencil& s, const std::vector<double>& F, const std::vector<double>& u,
                          std::vector<double>& out, int jobs) {
  const std::size_t nv = static_cast<std::size_t>(s.velocities), nc = static_cast<std::size_t>(s.corners);
  const double h = s.h;
  auto node = [&](std::size_t k) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nv; ++j) {
      std::size_t base = (k * nv + j) * nc;
      double interp = 0.0;
      for (std::size_t c = 0; c < nc; ++c) interp += s.wt[base + c] * u[s.idx[base + c]];
      best = std::min(best, s.cost[k * nv + j] + (1.0 - h) * interp);
    }
    out[k] = best + h * F[k];
  };
  if (jobs > 1 && u.size() >= 256) {
    parallel_for(u.size(), node, jobs);
  } else {
    for (std::size_t k = 0; k < u.size(); ++k) node(k);
  }
}

inline SolveResult iterate(const Stencil& s, const GridFunction& F, const SolveOptions& o) {
  SolveResult r{F, {}};
  std::vector<double> next(F.size());
  double prev = -1.0;
  const double h = s.h;
  for (int it = 1; it <= o.max_iterations; ++it) {
    apply_stencil(s, F.values(), r.u.values(), next, o.jobs);
    double res = 0.0;
    for (std::size_t k = 0; k < next.size(); ++k) res = std::max(res, std::abs(next[k] - r.u[k]));
    r.u.values().swap(next);
    double floor = 1e-12 * (1.0 + std::abs(r.u.max()) + std::abs(r.u.min()));
    if (prev > floor && res > floor) r.report.contraction_factor = std::max(r.report.contraction_factor, res / prev);
    prev = res;
    r.report.iterations = it;
    r.report.residual = res;
    r.report.error_bound = res * (1.0 - h) / h;
    if (r.report.error_bound <= o.tolerance) return r;
  }
  throw NoConvergence("value iteration did not reach the requested tolerance", r.report.iterations,
                      r.report.residual);
}

}  // namespace detail

/// Largest grid slope of F, by forward differences.
inline double grid_lipschitz(const GridFunction& F) {
  double lip = 0.0;
  for (std::size_t k = 0; k < F.size(); ++k) {
    auto i = F.index(k);
    lip = std::max(lip, std::abs(F[F.flat(i[0] + 1, i[1])] - F[k]) / F.spacing(0));
    if (F.chart().dim() == 2) lip = std::max(lip, std::abs(F[F.flat(i[0], i[1] + 1)] - F[k]) / F.spacing(1));
  }
  return lip;
}

/// Velocity range large enough to contain the optimal controls: the Legendre
/// inverse of the largest slope of F, times a safety multiplier, floored.
inline double velocity_bound(const Lagrangian& L, const GridFunction& F, double multiplier) {
  double lip = grid_lipschitz(F);
  double v = std::pow(lip / L.multiplier().min(), L.q() - 1.0);
  return std::max(multiplier * v, 0.1);
}

/// Fixed point of u(x) = min_v h (L(x, v) + F(x)) + (1 - h) u(x + h v) over a
/// uniform velocity stencil in [-vmax, vmax]^d.
inline SolveResult solve_stationary(const Lagrangian& L, const GridFunction& F, const SolveOptions& o = {}) {
  if (!(L.chart() == F.chart())) throw std::invalid_argument("Lagrangian and data live on different charts");
  if (o.velocities < 3 || o.velocities % 2 == 0) throw std::invalid_argument("velocity stencil needs an odd count >= 3");
  if (!(o.tolerance > 0.0) || !(o.step_factor > 0.0) || !(o.vmax_multiplier > 0.0))
    throw std::invalid_argument("solver tolerances must be positive");
  double vmax = o.vmax > 0.0 ? o.vmax : velocity_bound(L, F, o.vmax_multiplier);
  double dx = F.spacing(0);
  if (F.chart().dim() == 2) dx = std::min(dx, F.spacing(1));
  double h = std::min(0.5, o.step_factor * dx / vmax);
  detail::Stencil s = detail::build_stencil(L, F, vmax, o.velocities, h);
  SolveResult r = detail::iterate(s, F, o);
  r.report.step = h;
  r.report.vmax = vmax;
  if (o.self_check) {
    // same step and spacing, twice the range
    detail::Stencil wide = detail::build_stencil(L, F, 2.0 * vmax, 2 * o.velocities - 1, h);
    SolveResult w = detail::iterate(wide, F, o);
    r.report.vmax_check = w.u.sup_distance(r.u);
  }
  return r;
}

/// Options shared by two solves so that both use the same stencil.
inline SolveOptions common_options(const Lagrangian& L, const GridFunction& F0, const GridFunction& F1,
                                   SolveOptions o = {}) {
  if (o.vmax <= 0.0) o.vmax = std::max(velocity_bound(L, F0, o.vmax_multiplier), velocity_bound(L, F1, o.vmax_multiplier));
  return o;
}

/// One application of the discrete operator, for monotonicity checks.
inline GridFunction apply_scheme(const Lagrangian& L, const GridFunction& F, const GridFunction& u, double vmax,
                                 const SolveOptions& o = {}) {
  F.require_same(u);
  double dx = F.spacing(0);
  if (F.chart().dim() == 2) dx = std::min(dx, F.spacing(1));
  double h = std::min(0.5, o.step_factor * dx / vmax);
  detail::Stencil s = detail::build_stencil(L, F, vmax, o.velocities, h);
  GridFunction out = u;
  detail::apply_stencil(s, F.values(), u.values(), out.values(), 1);
  return out;
}

struct SubsolutionReport {
  double worst_violation = -std::numeric_limits<double>::infinity();
  std::size_t worst_node = 0;
};

/// max over nodes of u + H(x, p) - F over discrete superdifferential proxies
/// p. Per dimension the candidates are both one-sided differences when the
/// backward slope is at least the forward slope (a concave kink), otherwise
/// the central difference; every combination across dimensions is tested and
/// the largest value kept.
inline SubsolutionReport numeric_subsolution_check(const Lagrangian& L, const GridFunction& u, const GridFunction& F) {
  u.require_same(F);
  const int d = u.chart().dim();
  SubsolutionReport rep;
  for (std::size_t k = 0; k < u.size(); ++k) {
    auto i = u.index(k);
    std::array<std::vector<double>, 2> cand;
    for (int e = 0; e < d; ++e) {
      std::size_t kp = e == 0 ? u.flat(i[0] + 1, i[1]) : u.flat(i[0], i[1] + 1);
      std::size_t km = e == 0 ? u.flat(i[0] - 1, i[1]) : u.flat(i[0], i[1] - 1);
      double dx = u.spacing(e);
      double fwd = (u[kp] - u[k]) / dx, bwd = (u[k] - u[km]) / dx;
      if (bwd >= fwd) cand[e] = {fwd, bwd};
      else cand[e] = {0.5 * (fwd + bwd)};
    }
    Point x = u.node(k);
    for (double p0 : cand[0])
      for (std::size_t b = 0; b < (d == 2 ? cand[1].size() : 1); ++b) {
        Vec p(d);
        p[0] = p0;
        if (d == 2) p[1] = cand[1][b];
        double v = u[k] + L.hamiltonian({x, p}) - F[k];
        if (v > rep.worst_violation) {
          rep.worst_violation = v;
          rep.worst_node = k;
        }
      }
  }
  return rep;
}

}  // namespace geohj
