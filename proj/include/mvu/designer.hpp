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

#ifndef MVU_DESIGNER_HPP_
#define MVU_DESIGNER_HPP_

#include <cstdint>

#include "mvu/tables.hpp"

namespace mvu {

enum class DesignMethod { kHard, kPenalty };
enum class DesignInit { kDitherThenGrr, kUniform };

struct SolverOptions {
  DesignMethod method = DesignMethod::kHard;
  double penalty_weight = 1e3;     // initial soft-penalty weight, doubled per
                                   // outer iteration up to 1e6
  int max_outer_iterations = 40;
  double objective_tol = 1e-10;    // relative stop tolerance on the objective
  DesignInit init = DesignInit::kDitherThenGrr;
  int restarts = 2;                // extra randomized alphabet restarts
  bool explore = true;             // penalty-exploration + hard re-polish pass
  std::uint64_t seed = 0;
};

struct DesignResult {
  MechanismTable table;
  double objective = 0.0;          // exact value of the variance objective
  FeasibilityReport report;
  int iterations = 0;
  bool converged = false;
  std::string diagnostic;          // set when converged is false
};

// Closed-form unbiased bitwise randomized response: the b-fold product of
// the single-bit mechanism at budget epsilon/b, with keep probability
// 1/(1 + e^{-eps/b}) and per-bit alphabet {-1/(e^{eps/b}-1),
// e^{eps/b}/(e^{eps/b}-1)}. Bit j of the integer (B-1)z carries decode
// weight 2^j/(B-1).
MechanismTable build_bitwise_rr(double epsilon, int bits);

// Unbiased generalized randomized response: P = ((e^eps - 1) I + 11') /
// (B + e^eps - 1) with the alphabet solved from the B unbiasedness
// equations P a = x.
MechanismTable build_generalized_rr(double epsilon, int bits);

// Minimum-variance design of (P, A) under row-stochasticity,
// non-negativity, the DP (or metric-DP) ratio constraints and
// unbiasedness, minimizing sum_{i,j} p_ij (x_i - a_j)^2. Hard mode keeps
// unbiasedness exact; penalty mode trades it off against a soft penalty and
// reports the residual. Deterministic given options and seed.
DesignResult design_mvu(const PrivacySpec& spec, int b_in, int b_out,
                        const SolverOptions& opts);

// Convenience wrapper for the vector pipeline: metric-DP design at
// (epsilon/2, p = 1).
DesignResult design_mvu_metric_l1_halved(double epsilon, int b_in, int b_out,
                                         const SolverOptions& opts);

// Deterministic dithering law from the unit grid with levels_from points
// onto the unit grid with levels_to points (rows sum to 1, two nonzeros per
// row, exact where grids coincide). Shared by the designer's feasible
// initialization and its tall-table composition.
Eigen::MatrixXd dither_matrix(int levels_from, int levels_to);

}  // namespace mvu

#endif  // MVU_DESIGNER_HPP_
