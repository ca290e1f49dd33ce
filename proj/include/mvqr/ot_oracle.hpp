#pragma once
// Exact optimal transport references for square instances with uniform
// weights.
//
//   assignment_solve   shortest-augmenting-path assignment (dense, O(n^3))
//   assignment_brute   permutation enumeration, n <= 8
//   semidual_solve     entropic ascent on the semi-dual with temperature
//                      annealing; reports a hard (weak-duality) lower bound
//
// Costs are arbitrary finite doubles; helpers build the c(u, y) = d^2/2
// matrix from manifold samples. The assignment solvers run single-threaded
// per instance.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "mvqr/error.hpp"
#include "mvqr/manifold.hpp"

namespace mvqr {

struct AssignmentResult {
  std::vector<int> row_of_col;  // row assigned to each column
  std::vector<int> col_of_row;  // column assigned to each row
  double cost = 0.0;
};

inline void check_cost_matrix(const std::vector<double>& c, int n) {
  if (n <= 0) throw EmptyBatch("assignment: empty instance");
  if (c.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n))
    throw DimensionMismatch("assignment: cost matrix is not n x n");
  for (double v : c)
    if (!std::isfinite(v)) throw NonFiniteCost("assignment: non-finite cost entry");
}

// Dual-feasible shortest augmenting path assignment (Jonker-Volgenant
// family). Row potentials u, column potentials v; each row is inserted by a
// Dijkstra scan over columns.
inline AssignmentResult assignment_solve(const std::vector<double>& c, int n) {
  check_cost_matrix(c, n);
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = -1;
      double delta = inf;
      const double* row = c.data() + static_cast<std::size_t>(i0 - 1) * n;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  AssignmentResult res;
  res.row_of_col.assign(n, -1);
  res.col_of_row.assign(n, -1);
  for (int j = 1; j <= n; ++j) {
    res.row_of_col[j - 1] = p[j] - 1;
    res.col_of_row[p[j] - 1] = j - 1;
    res.cost += c[static_cast<std::size_t>(p[j] - 1) * n + (j - 1)];
  }
  return res;
}

// Exhaustive reference, n <= 8.
inline AssignmentResult assignment_brute(const std::vector<double>& c, int n) {
  check_cost_matrix(c, n);
  if (n > 8) throw DimensionMismatch("assignment_brute: instance too large");
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += c[static_cast<std::size_t>(i) * n + perm[i]];
    if (s < best_cost) {
      best_cost = s;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  AssignmentResult res;
  res.col_of_row = best;
  res.row_of_col.assign(n, -1);
  for (int i = 0; i < n; ++i) res.row_of_col[best[i]] = i;
  res.cost = best_cost;
  return res;
}

// Row-major cost matrix c(u_i, y_j) = d(u_i, y_j)^2 / 2.
inline std::vector<double> cost_matrix(Manifold m, const std::vector<Point>& us,
                                       const std::vector<Point>& ys) {
  std::vector<double> c(us.size() * ys.size());
  for (std::size_t i = 0; i < us.size(); ++i)
    for (std::size_t j = 0; j < ys.size(); ++j)
      c[i * ys.size() + j] = cost(m, us[i], ys[j]);
  return c;
}

struct SemidualResult {
  std::vector<double> potential;  // f over rows
  double dual_value = 0.0;        // hard semi-dual at f, scaled per point
  int iterations = 0;
};

// Entropic dual ascent (Sinkhorn in the log domain) for uniform marginals,
// annealing the temperature down to gamma_final, then scoring the iterate
// with the hard semi-dual
//
//   D(f) = (1/n) sum_i f_i + (1/n) sum_j min_i (C_ij - f_i),
//
// which lower-bounds the per-point assignment optimum for any f (weak
// duality). Small instances only; cost is O(iterations * n^2).
inline SemidualResult semidual_solve(const std::vector<double>& c, int n,
                                     double gamma_final = 1e-7) {
  check_cost_matrix(c, n);
  std::vector<double> f(n, 0.0), g(n, 0.0), buf(n);
  auto lse_col = [&](int j, double gamma) {
    // -gamma log sum_i (1/n) exp((f_i - C_ij) / gamma)
    double hi = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      buf[i] = f[i] - c[static_cast<std::size_t>(i) * n + j];
      hi = std::max(hi, buf[i]);
    }
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::exp((buf[i] - hi) / gamma);
    return -hi - gamma * std::log(s / n);
  };
  auto lse_row = [&](int i, double gamma) {
    double hi = -std::numeric_limits<double>::infinity();
    const double* row = c.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      buf[j] = g[j] - row[j];
      hi = std::max(hi, buf[j]);
    }
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += std::exp((buf[j] - hi) / gamma);
    return -hi - gamma * std::log(s / n);
  };
  int total = 0;
  double gamma = 0.5;
  for (;;) {
    for (int sweep = 0; sweep < 200; ++sweep) {
      double delta = 0.0;
      for (int j = 0; j < n; ++j) g[j] = lse_col(j, gamma);
      for (int i = 0; i < n; ++i) {
        double nf = lse_row(i, gamma);
        delta = std::max(delta, std::abs(nf - f[i]));
        f[i] = nf;
      }
      ++total;
      if (delta < 1e-3 * gamma) break;
    }
    if (gamma <= gamma_final) break;
    gamma = std::max(gamma_final, gamma * 0.5);
  }
  SemidualResult res;
  res.potential = f;
  res.iterations = total;
  double sum_f = 0.0, sum_min = 0.0;
  for (int i = 0; i < n; ++i) sum_f += f[i];
  for (int j = 0; j < n; ++j) {
    double lo = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i)
      lo = std::min(lo, c[static_cast<std::size_t>(i) * n + j] - f[i]);
    sum_min += lo;
  }
  res.dual_value = (sum_f + sum_min) / n;
  return res;
}

}  // namespace mvqr
