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

#ifndef MVU_ACCOUNTANT_HPP_
#define MVU_ACCOUNTANT_HPP_

#include <span>
#include <vector>

#include "mvu/tables.hpp"

namespace mvu {

// Order-alpha Renyi divergence between every pair of rows of the
// row-stochastic matrix P: entry (i, i') is
//   1/(alpha-1) * log sum_j p_ij^alpha / p_i'j^(alpha-1),
// computed in log space. A zero denominator against a positive numerator
// yields +inf. The diagonal is exactly zero.
Eigen::MatrixXd renyi_matrix(const Eigen::MatrixXd& P, double alpha);

// Quantized-input distance costs C_ij = |i - j|^p.
Eigen::MatrixXd cost_matrix(int levels, double p);

// Exact optimum of: choose one row pair (i_l, i_l') per coordinate
// l = 1..d maximizing sum_l D(i_l, i_l') subject to sum_l C(i_l, i_l') <=
// budget, by exhaustive enumeration. Guarded to (B^2)^d <= 1e7; larger
// instances must use the LP or greedy bound.
double rdp_exact(const Eigen::MatrixXd& D, const Eigen::MatrixXd& C,
                 double budget, int dimension);

// Exact optimum of the LP relaxation (per-coordinate subdistributions over
// pairs, joint budget). All coordinate blocks being identical, the optimum
// is attained at identical per-coordinate distributions, and the resulting
// two-constraint LP is solved exactly through its dual's upper envelope.
double rdp_lp_bound(const Eigen::MatrixXd& D, const Eigen::MatrixXd& C,
                    double budget, int dimension);

// Closed-form bound: with (i*, j*) maximizing D/C over off-diagonal pairs
// and d0 = budget / C(i*, j*), the LP value is at most d0 * D(i*, j*).
double rdp_greedy_bound(const Eigen::MatrixXd& D, const Eigen::MatrixXd& C,
                        double budget);

// {1.25, 1.5, 2, 3, ..., 64}.
std::vector<double> default_alpha_grid();

struct ConversionResult {
  double epsilon = 0.0;
  double alpha_star = 0.0;
};

// Standard composition and conversion: min over alpha of
// steps * eps(alpha) + log(1/delta) / (alpha - 1).
ConversionResult compose_and_convert(std::span<const double> orders,
                                     std::span<const double> eps_per_step,
                                     int steps, double delta);

enum class AccountMethod { kGreedy, kLp, kExact };

struct RenyiProfile {
  std::vector<double> orders;
  std::vector<double> per_step_eps;  // eps(alpha) per order, one step
  double metric_order = 1.0;
  double sensitivity = 0.5;
  double budget = 0.0;               // (B_in - 1)^p * sensitivity^p
  int dimension = 1;
  AccountMethod method = AccountMethod::kLp;
};

// Per-order RDP of one vector application of the table: divergence matrix,
// cost matrix and the chosen knapsack bound at budget
// (B_in-1)^p * sensitivity^p.
RenyiProfile build_renyi_profile(const MechanismTable& table,
                                 double metric_order, double sensitivity,
                                 int dimension, AccountMethod method,
                                 std::span<const double> orders);

struct AccountLedger {
  RenyiProfile profile;
  int steps = 1;
  double delta = 1e-5;
  std::vector<double> composed_eps;  // steps * per-step eps(alpha)
  double final_epsilon = 0.0;
  double alpha_star = 0.0;
};

AccountLedger account(const MechanismTable& table, double metric_order,
                      double sensitivity, int dimension, int steps,
                      double delta, AccountMethod method,
                      std::span<const double> orders);

}  // namespace mvu

#endif  // MVU_ACCOUNTANT_HPP_
