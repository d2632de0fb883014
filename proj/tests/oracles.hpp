#pragma once

// Independent reference solvers used only by the tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// min c'x subject to A x = b, x >= 0, by a dense two-phase tableau simplex
/// with Bland's rule. Returns +inf when infeasible.
inline double dense_lp(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c) {
  const int m = static_cast<int>(A.rows()), n = static_cast<int>(A.cols());
  // columns: n originals, m artificials, then rhs
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m + 1, n + m + 1);
  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) {
    double s = b[i] < 0 ? -1.0 : 1.0;
    T.row(i).head(n) = s * A.row(i);
    T(i, n + i) = 1.0;
    T(i, n + m) = s * b[i];
    basis[i] = n + i;
  }
  auto run = [&](int cols) {
    for (int guard = 0; guard < 100000; ++guard) {
      int e = -1;
      for (int j = 0; j < cols; ++j)
        if (T(m, j) < -1e-11) {
          e = j;
          break;
        }
      if (e < 0) return;
      int l = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i)
        if (T(i, e) > 1e-12) {
          double r = T(i, n + m) / T(i, e);
          if (r < best - 1e-14 || (std::abs(r - best) <= 1e-14 && basis[i] < basis[l])) {
            best = r;
            l = i;
          }
        }
      if (l < 0) return;  // unbounded; cannot happen for transport
      T.row(l) /= T(l, e);
      for (int i = 0; i <= m; ++i)
        if (i != l && T(i, e) != 0.0) T.row(i) -= T(i, e) * T.row(l);
      basis[l] = e;
    }
  };
  // phase I: minimize the sum of artificials
  T.row(m).setZero();
  for (int i = 0; i < m; ++i) T.row(m) -= T.row(i);
  for (int i = 0; i < m; ++i) T(m, n + i) = 0.0;
  run(n + m);
  if (-T(m, n + m) > 1e-9) return std::numeric_limits<double>::infinity();
  // drive remaining artificials out where possible
  for (int i = 0; i < m; ++i) {
    if (basis[i] < n) continue;
    for (int j = 0; j < n; ++j)
      if (std::abs(T(i, j)) > 1e-9) {
        T.row(i) /= T(i, j);
        for (int k = 0; k <= m; ++k)
          if (k != i && T(k, j) != 0.0) T.row(k) -= T(k, j) * T.row(i);
        basis[i] = j;
        break;
      }
  }
  // phase II on the original columns; redundant rows keep a zero artificial
  T.row(m).setZero();
  T.row(m).head(n) = c.transpose();
  for (int i = 0; i < m; ++i)
    if (basis[i] < n) T.row(m) -= c[basis[i]] * T.row(i);
  for (int i = 0; i < m; ++i) T(m, n + i) = 0.0;
  run(n);
  return -T(m, n + m);
}

/// Transport problem as a dense LP over row-major plan entries.
inline double transport_lp(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::MatrixXd& C) {
  const int m = static_cast<int>(a.size()), n = static_cast<int>(b.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + n, m * n);
  Eigen::VectorXd rhs(m + n), c(m * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      A(i, i * n + j) = 1.0;
      A(m + j, i * n + j) = 1.0;
      c[i * n + j] = C(i, j);
    }
  rhs << a, b;
  return dense_lp(A, rhs, c);
}

/// Equal weights and equal sizes: the optimum is attained at a permutation.
inline double permutation_brute_force(const Eigen::MatrixXd& C) {
  const int n = static_cast<int>(C.rows());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += C(i, perm[i]);
    best = std::min(best, s / n);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace oracle
