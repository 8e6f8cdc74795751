#pragma once

// Independent reference computations for the unit and acceptance suites.
// Deliberately naive: exhaustive enumeration, brute force and quadrature.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// Minimum transport cost by enumerating every basic solution of the
// transportation polytope {x >= 0 : row sums = a, column sums = b}.
inline double lp_vertex_min(const Eigen::MatrixXd& cost, const std::vector<double>& a, const std::vector<double>& b) {
  const int n = static_cast<int>(a.size()), m = static_cast<int>(b.size());
  const int vars = n * m;
  const int rank = n + m - 1;  // the last column constraint is implied
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rank, vars);
  Eigen::VectorXd rhs(rank);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) A(i, i * m + j) = 1.0;
    rhs(i) = a[static_cast<std::size_t>(i)];
  }
  for (int j = 0; j + 1 < m; ++j) {
    for (int i = 0; i < n; ++i) A(n + j, i * m + j) = 1.0;
    rhs(n + j) = b[static_cast<std::size_t>(j)];
  }
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(static_cast<std::size_t>(rank));
  std::iota(pick.begin(), pick.end(), 0);
  while (true) {
    Eigen::MatrixXd sub(rank, rank);
    for (int k = 0; k < rank; ++k) sub.col(k) = A.col(pick[static_cast<std::size_t>(k)]);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sub);
    if (lu.isInvertible()) {
      const Eigen::VectorXd x = lu.solve(rhs);
      if (x.minCoeff() >= -1e-12) {
        double c = 0.0;
        for (int k = 0; k < rank; ++k) {
          const int v = pick[static_cast<std::size_t>(k)];
          c += x(k) * cost(v / m, v % m);
        }
        best = std::min(best, c);
      }
    }
    int k = rank - 1;
    while (k >= 0 && pick[static_cast<std::size_t>(k)] == vars - rank + k) --k;
    if (k < 0) break;
    ++pick[static_cast<std::size_t>(k)];
    for (int j = k + 1; j < rank; ++j) pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
  }
  return best;
}

// Most instances on the diagonal over every injection of clusters into
// classes (square-padded), by trying all permutations.
inline std::size_t brute_force_matched(const std::vector<int>& truth, const std::vector<int>& pred) {
  int kt = 0, kp = 0;
  for (int t : truth) kt = std::max(kt, t + 1);
  for (int p : pred) kp = std::max(kp, p + 1);
  const int k = std::max(kt, kp);
  std::vector<std::vector<std::size_t>> table(static_cast<std::size_t>(k), std::vector<std::size_t>(static_cast<std::size_t>(k), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) ++table[static_cast<std::size_t>(pred[i])][static_cast<std::size_t>(truth[i])];
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t s = 0;
    for (int p = 0; p < k; ++p) s += table[static_cast<std::size_t>(p)][static_cast<std::size_t>(perm[static_cast<std::size_t>(p)])];
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Beta function for positive integer shapes: (a-1)!(b-1)!/(a+b-1)!.
inline double beta_function_int(int a, int b) {
  double num = 1.0, den = 1.0;
  for (int i = 2; i < a; ++i) num *= i;
  for (int i = 2; i < b; ++i) num *= i;
  for (int i = 2; i < a + b; ++i) den *= i;
  return num / den;
}

// Composite Simpson rule with n (even) panels.
template <class F>
double simpson(F&& f, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double s = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(lo + i * h);
  return s * h / 3.0;
}

// Central difference of f along coordinate (r, c) of x.
template <class F, class M>
double central_difference(F&& f, M x, Eigen::Index r, Eigen::Index c, double h) {
  const double x0 = x(r, c);
  x(r, c) = x0 + h;
  const double fp = f(x);
  x(r, c) = x0 - h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

}  // namespace oracle
