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

#include "mvu/accountant.hpp"
#include "mvu/designer.hpp"
#include "mvu/tables.hpp"

using namespace mvu;

namespace {

// Independent product-construction oracle for bitwise RR: per-bit keep
// probability and alphabet, expanded over bit patterns.
void check_bitwise_product(const MechanismTable& t, double epsilon, int bits) {
  const int B = 1 << bits;
  const double e = std::exp(epsilon / bits);
  const double keep = 1.0 / (1.0 + std::exp(-epsilon / bits));
  const double a0 = -1.0 / (e - 1.0);
  const double a1 = e / (e - 1.0);
  for (int i = 0; i < B; ++i) {
    for (int y = 0; y < B; ++y) {
      double prob = 1.0;
      double dec = 0.0;
      for (int bit = 0; bit < bits; ++bit) {
        const int ib = (i >> bit) & 1;
        const int yb = (y >> bit) & 1;
        prob *= ib == yb ? keep : 1.0 - keep;
        dec += (1 << bit) * (yb ? a1 : a0);
      }
      CHECK(t.P(i, y) == doctest::Approx(prob).epsilon(1e-12));
      CHECK(t.A[y] == doctest::Approx(dec / (B - 1)).epsilon(1e-12));
    }
  }
}

// Closed-form generalized RR alphabet: a_i = (x_i (B + e^eps - 1) - B/2) /
// (e^eps - 1).
double grr_alphabet_oracle(double epsilon, int levels, int i) {
  const double e = std::exp(epsilon);
  const double x = static_cast<double>(i) / (levels - 1);
  return (x * (levels + e - 1.0) - levels / 2.0) / (e - 1.0);
}

}  // namespace

TEST_CASE("bitwise rr at one bit matches the hand-derived table") {
  const MechanismTable t = build_bitwise_rr(std::log(3.0), 1);
  CHECK(t.P(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(t.P(0, 1) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(t.P(1, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(t.P(1, 1) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(t.A[0] == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(t.A[1] == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("bitwise rr product construction at two bits") {
  const MechanismTable t = build_bitwise_rr(2.0, 2);
  check_bitwise_product(t, 2.0, 2);
  CHECK(realized_epsilon(t) == doctest::Approx(2.0).epsilon(1e-9));
  const FeasibilityReport r = check_feasibility(t);
  CHECK(r.max_bias <= 1e-10);
  CHECK(r.feasible);
}

TEST_CASE("bitwise rr approaches the identity at large epsilon") {
  const MechanismTable t = build_bitwise_rr(60.0, 2);
  CHECK((t.P - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() <=
        1e-9);
  for (int j = 0; j < 4; ++j)
    CHECK(t.A[j] == doctest::Approx(j / 3.0).epsilon(1e-9));
}

TEST_CASE("bitwise rr rejects overflowing alphabets") {
  CHECK_THROWS_AS(build_bitwise_rr(1e-15, 1), std::range_error);
}

TEST_CASE("generalized rr coincides with bitwise rr at one bit") {
  const MechanismTable g = build_generalized_rr(std::log(3.0), 1);
  CHECK(g.A[0] == doctest::Approx(-0.5).epsilon(1e-10));
  CHECK(g.A[1] == doctest::Approx(1.5).epsilon(1e-10));
}

TEST_CASE("generalized rr solves the unbiasedness system") {
  const MechanismTable t = build_generalized_rr(1.0, 3);
  for (int i = 0; i < 8; ++i) {
    const double mean = t.P.row(i) * t.A;
    CHECK(std::abs(mean - i / 7.0) <= 1e-10);
    CHECK(t.A[i] ==
          doctest::Approx(grr_alphabet_oracle(1.0, 8, i)).epsilon(1e-9));
  }
  CHECK(realized_epsilon(t) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("generalized rr alphabet approaches the grid at large epsilon") {
  const MechanismTable t = build_generalized_rr(60.0, 2);
  for (int j = 0; j < 4; ++j)
    CHECK(t.A[j] == doctest::Approx(j / 3.0).epsilon(1e-9));
}

TEST_CASE("mvu at one bit recovers the closed form") {
  SolverOptions opts;
  for (double eps : {std::log(3.0), 2.0, 5.0}) {
    const DesignResult res =
        design_mvu(PrivacySpec::pure_ldp(eps), 1, 1, opts);
    const double e = std::exp(eps);
    REQUIRE(res.converged);
    CHECK(std::abs(res.table.P(0, 0) - e / (1 + e)) <= 1e-4);
    CHECK(std::abs(res.table.P(1, 1) - e / (1 + e)) <= 1e-4);
    CHECK(std::abs(res.table.A[0] + 1.0 / (e - 1.0)) <= 1e-4);
    CHECK(std::abs(res.table.A[1] - e / (e - 1.0)) <= 1e-4);
  }
}

TEST_CASE("brute-forced 2x2 feasible set confirms the closed form optimum") {
  // Independent oracle for the one-bit design: sweep P over a fine grid of
  // symmetric and asymmetric matrices, solve the 2x2 unbiasedness system
  // for A, keep DP-feasible points, and minimize the objective directly.
  const double eps = 2.0;
  const double bound = std::exp(eps);
  double best_obj = 1e100;
  double best_p = -1, best_q = -1;
  const int grid = 400;
  for (int a = 1; a < grid; ++a) {
    for (int b = 1; b < grid; ++b) {
      const double p = a / static_cast<double>(grid);  // P(0,0)
      const double q = b / static_cast<double>(grid);  // P(1,0)
      if (std::abs(p - q) < 1e-9) continue;
      // Ratio constraints across both columns.
      if (p > bound * q || q > bound * p) continue;
      if ((1 - p) > bound * (1 - q) || (1 - q) > bound * (1 - p)) continue;
      // Unbiasedness: a0 p + a1 (1-p) = 0, a0 q + a1 (1-q) = 1.
      const double det = p - q;
      const double a0 = -(1 - p) / det;
      const double a1 = p / det;
      const double obj = p * a0 * a0 + (1 - p) * a1 * a1 +
                         q * (a0 - 1) * (a0 - 1) +
                         (1 - q) * (a1 - 1) * (a1 - 1);
      if (obj < best_obj) {
        best_obj = obj;
        // The objective is invariant under relabeling the two output
        // letters; keep the orientation with the larger diagonal.
        best_p = std::max(p, q);
        best_q = std::min(p, q);
      }
    }
  }
  const double p_star = bound / (1 + bound);
  CHECK(std::abs(best_p - p_star) <= 1.0 / grid + 1e-9);
  CHECK(std::abs(best_q - (1 - p_star)) <= 1.0 / grid + 1e-9);

  SolverOptions opts;
  const DesignResult res = design_mvu(PrivacySpec::pure_ldp(eps), 1, 1, opts);
  CHECK(res.objective <= best_obj + 1e-6);
}

TEST_CASE("large epsilon design approaches the identity transport") {
  SolverOptions opts;
  const DesignResult res = design_mvu(PrivacySpec::pure_ldp(10.0), 3, 3, opts);
  REQUIRE(res.converged);
  CHECK((res.table.P - Eigen::MatrixXd::Identity(8, 8)).cwiseAbs()
            .maxCoeff() <= 0.1);
  for (int j = 0; j < 8; ++j)
    CHECK(std::abs(res.table.A[j] - j / 7.0) <= 0.1);
}

TEST_CASE("small epsilon design needs alphabet magnitudes beyond one") {
  SolverOptions opts;
  const DesignResult res = design_mvu(PrivacySpec::pure_ldp(1.0), 3, 3, opts);
  REQUIRE(res.converged);
  CHECK(res.table.A.cwiseAbs().maxCoeff() > 1.0);
}

TEST_CASE("objective is non-increasing in epsilon") {
  SolverOptions opts;
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.5, 1.0, 2.0, 4.0, 8.0}) {
    const DesignResult res =
        design_mvu(PrivacySpec::pure_ldp(eps), 2, 2, opts);
    CHECK(res.objective <= prev + 1e-9);
    prev = res.objective;
  }
}

TEST_CASE("designed tables dominate generalized rr") {
  SolverOptions opts;
  for (double eps : {1.0, 3.0}) {
    for (int b : {2, 3}) {
      const DesignResult res =
          design_mvu(PrivacySpec::pure_ldp(eps), b, b, opts);
      const MechanismTable grr = build_generalized_rr(eps, b);
      CHECK(res.objective <= grr.variance_objective() + 1e-6);
    }
  }
}

TEST_CASE("every designed table passes its declared feasibility") {
  SolverOptions opts;
  for (double eps : {0.5, 2.0}) {
    for (int b_in : {1, 2, 3}) {
      for (int b_out : {1, 2}) {
        const DesignResult res =
            design_mvu(PrivacySpec::pure_ldp(eps), b_in, b_out, opts);
        CHECK(res.report.feasible);
        CHECK(res.report.max_dp_violation <= 1e-6);
        CHECK(res.report.max_bias <= 1e-4);
      }
    }
  }
}

TEST_CASE("metric halved wrapper is definitionally the halved direct call") {
  SolverOptions opts;
  opts.seed = 99;
  const DesignResult a = design_mvu_metric_l1_halved(2.0, 3, 3, opts);
  const DesignResult b =
      design_mvu(PrivacySpec::metric(1.0, 1.0), 3, 3, opts);
  CHECK((a.table.P - b.table.P).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.table.A - b.table.A).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.table.privacy.epsilon == 1.0);

  // The metric feasibility check runs with exponent (eps/2)|i-i'|/(B-1).
  CHECK(a.report.feasible);
  CHECK(a.report.realized_epsilon <= 1.0 + 1e-6);
}

TEST_CASE("metric design feeds the accountant with finite epsilon") {
  SolverOptions opts;
  const DesignResult res = design_mvu_metric_l1_halved(2.0, 3, 3, opts);
  const std::vector<double> orders = default_alpha_grid();
  const AccountLedger ledger =
      account(res.table, 1.0, 0.5, 4, 1, 1e-4, AccountMethod::kGreedy,
              orders);
  CHECK(std::isfinite(ledger.final_epsilon));
  CHECK(ledger.final_epsilon > 0.0);
}

TEST_CASE("penalty mode reports its bias honestly") {
  SolverOptions opts;
  opts.method = DesignMethod::kPenalty;
  const DesignResult res =
      design_mvu(PrivacySpec::pure_ldp(0.25), 2, 2, opts);
  CHECK(res.report.max_bias <= res.table.declared_tol.bias);
  CHECK(res.report.max_dp_violation <= 1e-6);
  CHECK(res.report.max_row_sum_dev <= 1e-9);
}

TEST_CASE("design is deterministic given options and seed") {
  SolverOptions opts;
  opts.seed = 1234;
  const DesignResult a = design_mvu(PrivacySpec::pure_ldp(1.5), 3, 2, opts);
  const DesignResult b = design_mvu(PrivacySpec::pure_ldp(1.5), 3, 2, opts);
  CHECK((a.table.P - b.table.P).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.table.A - b.table.A).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.objective == b.objective);
}

TEST_CASE("mixed bit-widths are supported in both directions") {
  SolverOptions opts;
  const DesignResult tall =
      design_mvu(PrivacySpec::pure_ldp(2.0), 4, 2, opts);
  CHECK(tall.report.feasible);
  CHECK(tall.table.P.rows() == 16);
  CHECK(tall.table.P.cols() == 4);

  const DesignResult wide =
      design_mvu(PrivacySpec::pure_ldp(2.0), 2, 3, opts);
  CHECK(wide.report.feasible);
  CHECK(wide.table.P.rows() == 4);
  CHECK(wide.table.P.cols() == 8);
  // More output letters cannot hurt the optimum.
  const DesignResult square =
      design_mvu(PrivacySpec::pure_ldp(2.0), 2, 2, opts);
  CHECK(wide.objective <= square.objective + 1e-6);
}

TEST_CASE("tall composed designs stay feasible") {
  SolverOptions opts;
  opts.restarts = 0;
  const DesignResult res =
      design_mvu(PrivacySpec::metric(2.5, 1.0), 9, 3, opts);
  CHECK(res.report.feasible);
  CHECK(res.report.realized_epsilon <= 2.5 + 1e-6);
  CHECK(res.report.max_bias <= 1e-4);
  CHECK(res.table.P.rows() == 512);
}

TEST_CASE("validation rejects nonsense requests") {
  SolverOptions opts;
  CHECK_THROWS_AS(design_mvu(PrivacySpec::pure_ldp(-1.0), 2, 2, opts),
                  std::invalid_argument);
  CHECK_THROWS_AS(design_mvu(PrivacySpec::pure_ldp(1.0), 0, 2, opts),
                  std::invalid_argument);
  CHECK_THROWS_AS(design_mvu(PrivacySpec::pure_ldp(25.0), 2, 2, opts),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_generalized_rr(0.0, 2), std::invalid_argument);
}
