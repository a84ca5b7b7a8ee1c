// Copyright 2026 The MVU Mechanism Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mvu/rng.hpp"
#include "mvu/simplex.hpp"

using mvu::LpProblem;
using mvu::LpStatus;
using mvu::RowSense;

TEST_CASE("two-variable lp with known optimum") {
  // min -x - 2y s.t. x + y <= 4, x <= 3, y <= 2, x,y >= 0 -> (2, 2), obj -6
  LpProblem p;
  const int x = p.add_var(-1.0);
  const int y = p.add_var(-2.0);
  auto& r1 = p.add_row(RowSense::kLe, 4.0);
  add_term(r1, x, 1.0);
  add_term(r1, y, 1.0);
  auto& r2 = p.add_row(RowSense::kLe, 3.0);
  add_term(r2, x, 1.0);
  auto& r3 = p.add_row(RowSense::kLe, 2.0);
  add_term(r3, y, 1.0);

  const auto sol = solve_lp(p);
  REQUIRE(sol.status == LpStatus::kOptimal);
  CHECK(sol.objective == doctest::Approx(-6.0).epsilon(1e-9));
  CHECK(sol.x[x] == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(sol.x[y] == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("equality rows need phase one") {
  // min x + y s.t. x + 2y = 3, 3x + y = 4 -> x = 1, y = 1
  LpProblem p;
  const int x = p.add_var(1.0);
  const int y = p.add_var(1.0);
  auto& r1 = p.add_row(RowSense::kEq, 3.0);
  add_term(r1, x, 1.0);
  add_term(r1, y, 2.0);
  auto& r2 = p.add_row(RowSense::kEq, 4.0);
  add_term(r2, x, 3.0);
  add_term(r2, y, 1.0);

  const auto sol = solve_lp(p);
  REQUIRE(sol.status == LpStatus::kOptimal);
  CHECK(sol.x[x] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(sol.x[y] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("infeasible system is reported") {
  LpProblem p;
  const int x = p.add_var(1.0, 0.0, 1.0);
  auto& r1 = p.add_row(RowSense::kGe, 2.0);
  add_term(r1, x, 1.0);
  const auto sol = solve_lp(p);
  CHECK(sol.status == LpStatus::kInfeasible);
}

TEST_CASE("unbounded direction is reported") {
  LpProblem p;
  const int x = p.add_var(-1.0);
  const int y = p.add_var(0.0);
  auto& r1 = p.add_row(RowSense::kGe, 0.0);
  add_term(r1, x, 1.0);
  add_term(r1, y, -1.0);
  const auto sol = solve_lp(p);
  CHECK(sol.status == LpStatus::kUnbounded);
}

TEST_CASE("upper-bounded variables flip without pivoting") {
  // min -x s.t. x <= 10 via variable bound only.
  LpProblem p;
  const int x = p.add_var(-1.0, 0.0, 10.0);
  auto& r1 = p.add_row(RowSense::kLe, 100.0);
  add_term(r1, x, 1.0);
  const auto sol = solve_lp(p);
  REQUIRE(sol.status == LpStatus::kOptimal);
  CHECK(sol.x[x] == doctest::Approx(10.0));
}

TEST_CASE("transportation-style degenerate problem") {
  // Two sources (supply 1 each), two sinks (demand 1 each), costs chosen so
  // the optimum ships diagonally.
  LpProblem p;
  // x[s][t]
  int v[2][2];
  const double cost[2][2] = {{1.0, 3.0}, {3.0, 1.0}};
  for (int s = 0; s < 2; ++s)
    for (int t = 0; t < 2; ++t) v[s][t] = p.add_var(cost[s][t]);
  for (int s = 0; s < 2; ++s) {
    auto& row = p.add_row(RowSense::kEq, 1.0);
    for (int t = 0; t < 2; ++t) add_term(row, v[s][t], 1.0);
  }
  for (int t = 0; t < 2; ++t) {
    auto& row = p.add_row(RowSense::kEq, 1.0);
    for (int s = 0; s < 2; ++s) add_term(row, v[s][t], 1.0);
  }
  const auto sol = solve_lp(p);
  REQUIRE(sol.status == LpStatus::kOptimal);
  CHECK(sol.objective == doctest::Approx(2.0).epsilon(1e-9));
}

namespace {

// Brute-force reference: sample random feasible points of the row-stochastic
// polytope and check the LP solution is no worse and satisfies constraints.
void check_against_feasible_samples(int rows, int cols, double ratio_bound,
                                    std::uint64_t seed) {
  mvu::Rng rng(seed);
  // min sum c_ij p_ij s.t. rows sum to 1, p_ij <= ratio_bound * m_j,
  // p_ij >= m_j (column-linked bounds), p >= 0.
  LpProblem p;
  std::vector<std::vector<int>> pv(rows, std::vector<int>(cols));
  std::vector<double> cost(static_cast<std::size_t>(rows * cols));
  for (auto& c : cost) c = rng.uniform(0.0, 2.0);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      pv[i][j] = p.add_var(cost[static_cast<std::size_t>(i * cols + j)]);
  std::vector<int> mv(cols);
  for (int j = 0; j < cols; ++j) mv[j] = p.add_var(0.0);
  for (int i = 0; i < rows; ++i) {
    auto& row = p.add_row(RowSense::kEq, 1.0);
    for (int j = 0; j < cols; ++j) add_term(row, pv[i][j], 1.0);
  }
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      auto& lo = p.add_row(RowSense::kGe, 0.0);
      add_term(lo, pv[i][j], 1.0);
      add_term(lo, mv[j], -1.0);
      auto& hi = p.add_row(RowSense::kLe, 0.0);
      add_term(hi, pv[i][j], 1.0);
      add_term(hi, mv[j], -ratio_bound);
    }
  }
  const auto sol = solve_lp(p);
  REQUIRE(sol.status == LpStatus::kOptimal);

  // Constraint satisfaction.
  for (int i = 0; i < rows; ++i) {
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      CHECK(sol.x[pv[i][j]] >= -1e-9);
      sum += sol.x[pv[i][j]];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  for (int j = 0; j < cols; ++j) {
    double mn = 1e30, mx = 0.0;
    for (int i = 0; i < rows; ++i) {
      mn = std::min(mn, sol.x[pv[i][j]]);
      mx = std::max(mx, sol.x[pv[i][j]]);
    }
    if (mx > 1e-12) CHECK(mx <= ratio_bound * mn * (1.0 + 1e-7) + 1e-9);
  }

  // No sampled feasible point beats the reported optimum. Feasible points:
  // mixtures of the uniform row with a random row-independent profile kept
  // within the ratio bound.
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> q(static_cast<std::size_t>(cols));
    double qs = 0.0;
    for (auto& v : q) {
      v = rng.uniform(1.0, ratio_bound);
      qs += v;
    }
    double value = 0.0;
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        value +=
            cost[static_cast<std::size_t>(i * cols + j)] * q[j] / qs;
    CHECK(value >= sol.objective - 1e-7);
  }
}

}  // namespace

TEST_CASE("random column-linked instances dominate sampled feasible points") {
  check_against_feasible_samples(4, 4, std::exp(1.0), 7);
  check_against_feasible_samples(8, 8, std::exp(2.0), 11);
  check_against_feasible_samples(8, 4, std::exp(0.5), 13);
}

TEST_CASE("moderately large sparse instance solves") {
  // 32x32 row-stochastic block with column links; checks performance path
  // (kernel refactorization + etas) stays numerically sound.
  check_against_feasible_samples(32, 32, std::exp(1.0), 23);
}
