#pragma once

// Exact discrete optimal transport by the transportation simplex (MODI
// potentials on a spanning-tree basis), plus an entropic Sinkhorn solver for
// large sweeps.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "geohj/error.hpp"

namespace geohj {

struct TransportSolution {
  Eigen::MatrixXd plan;
  double cost = 0.0;
  int pivots = 0;
  std::vector<std::pair<int, int>> basis;  // basic cells; empty for the entropic solver
};

struct SimplexOptions {
  int max_pivots = 100000;
  int degenerate_before_bland = 50;  // consecutive zero-step pivots before switching rules
};

namespace detail {

class TransportSimplex {
 public:
  TransportSimplex(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::MatrixXd& C)
      : m_(static_cast<int>(a.size())), n_(static_cast<int>(b.size())), C_(C), X_(Eigen::MatrixXd::Zero(m_, n_)),
        basic_(m_ * n_, 0) {
    double ra_sum = a.sum(), rb_sum = b.sum();
    if (std::abs(ra_sum - rb_sum) > 1e-9 * std::max(1.0, ra_sum)) throw SolverInfeasible("supplies and demands differ");
    northwest(a, b);
    double cmax = C_.cwiseAbs().maxCoeff();
    tol_ = 1e-12 * std::max(1.0, cmax);
  }

  TransportSolution solve(const SimplexOptions& o) {
    int degenerate = 0;
    int pivots = 0;
    bool bland = false;
    std::vector<double> u(m_), v(n_);
    for (; pivots < o.max_pivots; ++pivots) {
      potentials(u, v);
      int ei = -1, ej = -1;
      double best = -tol_;
      for (int i = 0; i < m_ && !(bland && ei >= 0); ++i) {
        for (int j = 0; j < n_; ++j) {
          if (basic_[idx(i, j)]) continue;
          double r = C_(i, j) - u[i] - v[j];
          if (r < best) {
            best = r;
            ei = i;
            ej = j;
            if (bland) break;
          }
        }
      }
      if (ei < 0) break;
      double theta = pivot(ei, ej);
      if (theta <= 0.0) {
        if (++degenerate >= o.degenerate_before_bland) bland = true;
      } else {
        degenerate = 0;
        bland = false;
      }
    }
    if (pivots >= o.max_pivots) throw SolverInfeasible("transport simplex exceeded its pivot budget");
    TransportSolution s;
    s.plan = X_;
    s.cost = (X_.array() * C_.array()).sum();
    s.pivots = pivots;
    for (int i = 0; i < m_; ++i)
      for (int j = 0; j < n_; ++j)
        if (basic_[idx(i, j)]) s.basis.emplace_back(i, j);
    return s;
  }

 private:
  int idx(int i, int j) const { return i * n_ + j; }

  void northwest(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    std::vector<double> ra(a.data(), a.data() + m_), rb(b.data(), b.data() + n_);
    int i = 0, j = 0;
    while (i < m_ && j < n_) {
      double x = std::min(ra[i], rb[j]);
      X_(i, j) = x;
      basic_[idx(i, j)] = 1;
      ra[i] -= x;
      rb[j] -= x;
      if (i == m_ - 1 && j == n_ - 1) break;
      if (i == m_ - 1) ++j;
      else if (j == n_ - 1) ++i;
      else if (ra[i] <= rb[j]) ++i;
      else ++j;
    }
  }

  // Potentials with u_0 = 0 from c_ij = u_i + v_j on basic cells.
  void potentials(std::vector<double>& u, std::vector<double>& v) const {
    std::vector<char> su(m_, 0), sv(n_, 0);
    std::vector<int> stack;  // nodes: rows as i, columns as m + j
    u[0] = 0.0;
    su[0] = 1;
    stack.push_back(0);
    while (!stack.empty()) {
      int node = stack.back();
      stack.pop_back();
      if (node < m_) {
        int i = node;
        for (int j = 0; j < n_; ++j)
          if (basic_[idx(i, j)] && !sv[j]) {
            v[j] = C_(i, j) - u[i];
            sv[j] = 1;
            stack.push_back(m_ + j);
          }
      } else {
        int j = node - m_;
        for (int i = 0; i < m_; ++i)
          if (basic_[idx(i, j)] && !su[i]) {
            u[i] = C_(i, j) - v[j];
            su[i] = 1;
            stack.push_back(i);
          }
      }
    }
    for (int i = 0; i < m_; ++i)
      if (!su[i]) throw SolverInfeasible("transport basis is not a spanning tree");
    for (int j = 0; j < n_; ++j)
      if (!sv[j]) throw SolverInfeasible("transport basis is not a spanning tree");
  }

  // Adds (ei, ej) to the basis, pushes mass around the cycle and drops the
  // first blocking cell in index order. Returns the step length.
  double pivot(int ei, int ej) {
    // path in the basis tree from column ej to row ei
    const int nodes = m_ + n_;
    std::vector<int> parent(nodes, -2);
    std::vector<int> queue{m_ + ej};
    parent[m_ + ej] = -1;
    for (std::size_t h = 0; h < queue.size() && parent[ei] == -2; ++h) {
      int node = queue[h];
      if (node < m_) {
        for (int j = 0; j < n_; ++j)
          if (basic_[idx(node, j)] && parent[m_ + j] == -2) {
            parent[m_ + j] = node;
            queue.push_back(m_ + j);
          }
      } else {
        int j = node - m_;
        for (int i = 0; i < m_; ++i)
          if (basic_[idx(i, j)] && parent[i] == -2) {
            parent[i] = node;
            queue.push_back(i);
          }
      }
    }
    if (parent[ei] == -2) throw SolverInfeasible("no cycle through the entering cell");
    // cells along the path from row ei back to column ej
    std::vector<std::pair<int, int>> cells{{ei, ej}};
    for (int node = ei; parent[node] != -1; node = parent[node]) {
      int nb = parent[node];
      if (node < m_) cells.emplace_back(node, nb - m_);
      else cells.emplace_back(nb, node - m_);
    }
    // cells[0] gains, then signs alternate
    double theta = std::numeric_limits<double>::infinity();
    int leave = -1;
    for (std::size_t k = 1; k < cells.size(); k += 2) {
      auto [i, j] = cells[k];
      double x = X_(i, j);
      if (x < theta || (x == theta && idx(i, j) < idx(cells[leave].first, cells[leave].second))) {
        theta = x;
        leave = static_cast<int>(k);
      }
    }
    for (std::size_t k = 0; k < cells.size(); ++k) {
      auto [i, j] = cells[k];
      X_(i, j) += (k % 2 == 0) ? theta : -theta;
    }
    auto [li, lj] = cells[static_cast<std::size_t>(leave)];
    X_(li, lj) = 0.0;
    basic_[idx(li, lj)] = 0;
    basic_[idx(ei, ej)] = 1;
    return theta;
  }

  int m_, n_;
  Eigen::MatrixXd C_;
  Eigen::MatrixXd X_;
  std::vector<char> basic_;
  double tol_ = 0.0;
};

}  // namespace detail

/// Exact minimizer of <C, X> over nonnegative X with row sums a and column
/// sums b.
inline TransportSolution solve_transport(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::MatrixXd& C,
                                         const SimplexOptions& o = {}) {
  if (a.size() == 0 || b.size() == 0) throw std::invalid_argument("transport problem has an empty side");
  if (C.rows() != a.size() || C.cols() != b.size()) throw std::invalid_argument("cost matrix has the wrong shape");
  if ((a.array() < 0.0).any() || (b.array() < 0.0).any()) throw std::invalid_argument("negative mass");
  if (!C.allFinite()) throw std::invalid_argument("cost matrix has non-finite entries");
  detail::TransportSimplex s(a, b, C);
  return s.solve(o);
}

struct SinkhornOptions {
  double regularization = 1e-2;  // relative to the largest cost
  int max_iterations = 100000;
  double tolerance = 1e-10;  // marginal violation
};

/// Entropic transport in the log domain. Approximate; never used where an
/// exact optimum is required.
inline TransportSolution solve_transport_entropic(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                                  const Eigen::MatrixXd& C, const SinkhornOptions& o = {}) {
  const int m = static_cast<int>(a.size()), n = static_cast<int>(b.size());
  double reg = o.regularization * std::max(1e-300, C.cwiseAbs().maxCoeff());
  Eigen::VectorXd f = Eigen::VectorXd::Zero(m), g = Eigen::VectorXd::Zero(n);
  auto lse = [](const Eigen::VectorXd& x) {
    double mx = x.maxCoeff();
    return mx + std::log((x.array() - mx).exp().sum());
  };
  Eigen::VectorXd la = a.array().log(), lb = b.array().log();
  TransportSolution s;
  for (int it = 0; it < o.max_iterations; ++it) {
    for (int i = 0; i < m; ++i) {
      if (a[i] == 0.0) continue;
      Eigen::VectorXd row = (g.array() - C.row(i).transpose().array()) / reg;
      f[i] = reg * (la[i] - lse(row));
    }
    for (int j = 0; j < n; ++j) {
      if (b[j] == 0.0) continue;
      Eigen::VectorXd col = (f.array() - C.col(j).array()) / reg;
      g[j] = reg * (lb[j] - lse(col));
    }
    s.pivots = it + 1;
    if (it % 10 == 0 || it + 1 == o.max_iterations) {
      Eigen::MatrixXd P(m, n);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          P(i, j) = (a[i] == 0.0 || b[j] == 0.0) ? 0.0 : std::exp((f[i] + g[j] - C(i, j)) / reg);
      double err = (P.rowwise().sum() - a).cwiseAbs().sum();
      s.plan = P;
      if (err <= o.tolerance) break;
    }
  }
  s.cost = (s.plan.array() * C.array()).sum();
  return s;
}

}  // namespace geohj
