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

#ifndef MVU_SIMPLEX_HPP_
#define MVU_SIMPLEX_HPP_

#include <limits>
#include <vector>

namespace mvu {

enum class RowSense { kLe, kGe, kEq };

enum class LpStatus { kOptimal, kInfeasible, kUnbounded, kIterationLimit };

// Linear program
//   min c'x  s.t.  row_i: a_i'x (<=|=|>=) b_i,  lower <= x <= upper,
// with sparse rows. Bounds may be +-inf but every variable needs at least
// one finite bound.
struct LpProblem {
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  struct Row {
    std::vector<int> idx;
    std::vector<double> val;
    RowSense sense = RowSense::kEq;
    double rhs = 0.0;
  };

  int num_vars = 0;
  std::vector<double> objective;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<Row> rows;

  int add_var(double cost, double lo = 0.0, double hi = kInf) {
    objective.push_back(cost);
    lower.push_back(lo);
    upper.push_back(hi);
    return num_vars++;
  }

  Row& add_row(RowSense sense, double rhs) {
    rows.push_back(Row{{}, {}, sense, rhs});
    return rows.back();
  }
};

inline void add_term(LpProblem::Row& row, int var, double coef) {
  row.idx.push_back(var);
  row.val.push_back(coef);
}

struct LpSolution {
  LpStatus status = LpStatus::kIterationLimit;
  std::vector<double> x;
  double objective = 0.0;
  int iterations = 0;
};

// Bounded-variable primal simplex (two phases, product-form basis updates,
// Bland's rule fallback on stalls). Deterministic for a fixed problem.
LpSolution solve_lp(const LpProblem& problem, int max_iterations = 0);

}  // namespace mvu

#endif  // MVU_SIMPLEX_HPP_
