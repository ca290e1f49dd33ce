#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <limits>
#include <vector>

#include "mvqr/ot_oracle.hpp"

using namespace mvqr;
using Catch::Approx;

namespace {

std::vector<double> random_costs(int n, Rng& rng) {
  std::vector<double> c(static_cast<std::size_t>(n) * n);
  for (double& v : c) v = rng.uniform(0.0, 3.0);
  return c;
}

void require_valid_permutation(const AssignmentResult& r, int n) {
  std::vector<int> seen(n, 0);
  for (int j = 0; j < n; ++j) {
    REQUIRE(r.row_of_col[j] >= 0);
    REQUIRE(r.row_of_col[j] < n);
    seen[r.row_of_col[j]] += 1;
    REQUIRE(r.col_of_row[r.row_of_col[j]] == j);
  }
  for (int s : seen) REQUIRE(s == 1);
}

}  // namespace

TEST_CASE("assignment on known instances", "[ot_oracle]") {
  std::vector<double> c2{0.0, 1.0, 1.0, 0.0};
  auto r = assignment_solve(c2, 2);
  REQUIRE(r.cost == 0.0);
  REQUIRE(r.col_of_row[0] == 0);

  std::vector<double> c{1.0, 2.0, 3.0, 0.0};
  r = assignment_solve(c, 2);
  REQUIRE(r.cost == 1.0);

  // forced off-diagonal
  std::vector<double> c3{10.0, 1.0, 1.0, 1.0, 10.0, 1.0, 1.0, 1.0, 10.0};
  r = assignment_solve(c3, 3);
  REQUIRE(r.cost == Approx(3.0));
}

TEST_CASE("assignment matches brute force", "[ot_oracle]") {
  Rng rng(2024, stream::kTest);
  for (int trial = 0; trial < 60; ++trial) {
    int n = 1 + static_cast<int>(rng.uniform_index(8));
    auto c = random_costs(n, rng);
    auto fast = assignment_solve(c, n);
    auto brute = assignment_brute(c, n);
    REQUIRE(fast.cost == Approx(brute.cost).margin(1e-12));
    require_valid_permutation(fast, n);
  }
  // and on geodesic cost instances
  for (Manifold m : {Manifold::S1, Manifold::S2, Manifold::T2}) {
    for (int trial = 0; trial < 10; ++trial) {
      int n = 2 + static_cast<int>(rng.uniform_index(7));
      std::vector<Point> us, ys;
      for (int i = 0; i < n; ++i) {
        us.push_back(random_point(m, rng));
        ys.push_back(random_point(m, rng));
      }
      auto c = cost_matrix(m, us, ys);
      REQUIRE(assignment_solve(c, n).cost ==
              Approx(assignment_brute(c, n).cost).margin(1e-12));
    }
  }
}

TEST_CASE("assignment rejects malformed input", "[ot_oracle]") {
  std::vector<double> bad{0.0, 1.0, std::numeric_limits<double>::quiet_NaN(), 2.0};
  REQUIRE_THROWS_AS(assignment_solve(bad, 2), NonFiniteCost);
  std::vector<double> inf{0.0, 1.0, std::numeric_limits<double>::infinity(), 2.0};
  REQUIRE_THROWS_AS(assignment_solve(inf, 2), NonFiniteCost);
  std::vector<double> short_c{0.0, 1.0, 2.0};
  REQUIRE_THROWS_AS(assignment_solve(short_c, 2), DimensionMismatch);
  REQUIRE_THROWS_AS(assignment_solve({}, 0), EmptyBatch);
  Rng rng(1, stream::kTest);
  REQUIRE_THROWS_AS(assignment_brute(random_costs(9, rng), 9), DimensionMismatch);
}

TEST_CASE("semidual lower-bounds the assignment optimum", "[ot_oracle]") {
  Rng rng(77, stream::kTest);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 4 + static_cast<int>(rng.uniform_index(9));
    auto c = random_costs(n, rng);
    auto primal = assignment_solve(c, n);
    auto dual = semidual_solve(c, n);
    REQUIRE(dual.dual_value <= primal.cost / n + 1e-9);
  }
}

TEST_CASE("semidual closes the duality gap on small geodesic instances", "[ot_oracle]") {
  Rng rng(78, stream::kTest);
  for (Manifold m : {Manifold::S1, Manifold::S2, Manifold::T2}) {
    for (int trial = 0; trial < 3; ++trial) {
      int n = 8 + static_cast<int>(rng.uniform_index(9));  // 8..16
      std::vector<Point> us, ys;
      for (int i = 0; i < n; ++i) {
        us.push_back(random_point(m, rng));
        ys.push_back(random_point(m, rng));
      }
      auto c = cost_matrix(m, us, ys);
      auto primal = assignment_solve(c, n);
      auto dual = semidual_solve(c, n);
      double gap = primal.cost / n - dual.dual_value;
      REQUIRE(gap >= -1e-9);
      REQUIRE(gap <= 1e-6);
    }
  }
}

TEST_CASE("assignment at moderate size is fast and consistent", "[ot_oracle]") {
  Rng rng(79, stream::kTest);
  int n = 300;
  auto c = random_costs(n, rng);
  auto t0 = std::chrono::steady_clock::now();
  auto r = assignment_solve(c, n);
  double ms = std::chrono::duration<double, std::milli>(
                  std::chrono::steady_clock::now() - t0)
                  .count();
  require_valid_permutation(r, n);
  REQUIRE(ms < 2000.0);
  // greedy bound: optimum can only be better than row-wise greedy
  double greedy = 0.0;
  std::vector<char> taken(n, 0);
  for (int i = 0; i < n; ++i) {
    int best = -1;
    for (int j = 0; j < n; ++j)
      if (!taken[j] && (best < 0 || c[i * static_cast<std::size_t>(n) + j] <
                                        c[i * static_cast<std::size_t>(n) + best]))
        best = j;
    taken[best] = 1;
    greedy += c[i * static_cast<std::size_t>(n) + best];
  }
  REQUIRE(r.cost <= greedy + 1e-9);
}
