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

#ifndef MVU_TABLES_HPP_
#define MVU_TABLES_HPP_

#include <Eigen/Dense>

#include <filesystem>
#include <string>

#include <json.hpp>

namespace mvu {

enum class PrivacyKind { kPureLdp, kMetric };

// Privacy target of a mechanism table: either pure local DP at budget
// epsilon, or metric DP at budget epsilon with respect to |x - x'|^p.
struct PrivacySpec {
  PrivacyKind kind = PrivacyKind::kPureLdp;
  double epsilon = 1.0;
  double metric_order = 1.0;  // p, meaningful for the metric kind only

  static PrivacySpec pure_ldp(double epsilon) {
    return {PrivacyKind::kPureLdp, epsilon, 1.0};
  }
  static PrivacySpec metric(double epsilon, double p) {
    return {PrivacyKind::kMetric, epsilon, p};
  }

  // Distance weighting the DP exponent between two inputs. Pure LDP uses
  // the uniform weight 1 for distinct inputs.
  [[nodiscard]] double distance(double x, double y) const;
  void validate() const;
};

struct Tolerances {
  double row_sum = 1e-9;
  double dp_log_ratio = 1e-6;
  double bias = 1e-4;
};

struct FeasibilityReport {
  double max_row_sum_dev = 0.0;
  double min_entry = 0.0;
  double max_dp_violation = 0.0;  // +inf when a mixed zero/positive column exists
  double max_bias = 0.0;
  double realized_epsilon = 0.0;
  bool feasible = false;
};

// Sampling probability matrix P, output alphabet A and the privacy target
// they were built for. Row i of P is the categorical output law for the
// quantized input i/(B_in - 1). Immutable in spirit: every operation on a
// table is read-only.
struct MechanismTable {
  int b_in = 1;   // input bit-width,  B_in  = 2^b_in rows
  int b_out = 1;  // output bit-width, B_out = 2^b_out columns
  Eigen::MatrixXd P;
  Eigen::VectorXd A;
  PrivacySpec privacy;
  Tolerances declared_tol;
  nlohmann::json provenance = nlohmann::json::object();

  [[nodiscard]] int input_levels() const { return 1 << b_in; }
  [[nodiscard]] int output_levels() const { return 1 << b_out; }
  [[nodiscard]] double input_point(int i) const {
    return static_cast<double>(i) / (input_levels() - 1);
  }
  // Exact value of the design objective sum_{i,j} p_ij (x_i - a_j)^2.
  [[nodiscard]] double variance_objective() const;
  void validate_shape() const;
};

// Probabilities smaller than this are treated as exact zeros; ratios against
// a flushed zero are only feasible when its whole column is zero.
inline constexpr double kProbabilityFloor = 1e-12;

void flush_small_entries(Eigen::MatrixXd& P,
                         double floor = kProbabilityFloor);

// Exhaustive evaluation of the feasibility conditions over all (i, i', j):
// row-stochasticity, non-negativity, the DP (or metric-DP) log-ratio bound
// and the unbiasedness residual. Never mutates the table.
FeasibilityReport check_feasibility(const MechanismTable& table,
                                    const Tolerances& tol);
inline FeasibilityReport check_feasibility(const MechanismTable& table) {
  return check_feasibility(table, table.declared_tol);
}

// Tightest epsilon the table actually attains: max over (i != i', j) of
// |log p_ij - log p_i'j|, divided by the metric distance for metric tables.
// +inf when some column mixes zero and positive entries.
double realized_epsilon(const MechanismTable& table);

nlohmann::json serialize(const MechanismTable& table);

struct TableFile {
  MechanismTable table;
  FeasibilityReport report;
};

// Parses and validates a table document; recomputes the feasibility report.
// Throws std::invalid_argument with a path to the offending entry on schema
// violations, non-finite values or negative probabilities. When
// strict_feasibility is set, a report that violates the declared tolerances
// is an error as well; otherwise it is surfaced in the returned report only.
TableFile deserialize(const nlohmann::json& doc,
                      bool strict_feasibility = true);

void save_table(const MechanismTable& table, const std::filesystem::path& p);
TableFile load_table(const std::filesystem::path& p,
                     bool strict_feasibility = true);

inline constexpr int kTableSchemaVersion = 1;

}  // namespace mvu

#endif  // MVU_TABLES_HPP_
