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

#include "mvu/tables.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

namespace mvu {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : "-inf";
}

double number_from_json(const nlohmann::json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  throw std::invalid_argument(path + ": expected a number");
}

struct DpStats {
  double max_violation = 0.0;
  double realized = 0.0;
};

// Exhaustive scan over all (i, i', j). Columns mixing exact zeros with
// positive entries have an unbounded log-ratio; all-zero columns impose no
// constraint.
DpStats dp_stats(const Eigen::MatrixXd& P, const MechanismTable& table) {
  const int rows = static_cast<int>(P.rows());
  const int cols = static_cast<int>(P.cols());
  Eigen::MatrixXd logs(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      logs(i, j) = P(i, j) > 0 ? std::log(P(i, j)) : -kInf;

  DpStats stats;
  const PrivacySpec& ps = table.privacy;
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) {
      for (int i2 = i + 1; i2 < rows; ++i2) {
        const bool zi = P(i, j) == 0.0;
        const bool zi2 = P(i2, j) == 0.0;
        if (zi && zi2) continue;
        if (zi != zi2) {
          stats.max_violation = kInf;
          stats.realized = kInf;
          return stats;
        }
        const double gap = std::abs(logs(i, j) - logs(i2, j));
        const double dist = ps.distance(table.input_point(i),
                                        table.input_point(i2));
        stats.realized = std::max(stats.realized, gap / dist);
        stats.max_violation =
            std::max(stats.max_violation, gap - ps.epsilon * dist);
      }
    }
  }
  stats.max_violation = std::max(stats.max_violation, 0.0);
  return stats;
}

}  // namespace

double PrivacySpec::distance(double x, double y) const {
  if (kind == PrivacyKind::kPureLdp) return x == y ? 0.0 : 1.0;
  const double gap = std::abs(x - y);
  return metric_order == 1.0 ? gap : std::pow(gap, metric_order);
}

void PrivacySpec::validate() const {
  if (!(epsilon > 0) || !std::isfinite(epsilon))
    throw std::invalid_argument("privacy: epsilon must be finite and positive");
  if (kind == PrivacyKind::kMetric && !(metric_order >= 1.0))
    throw std::invalid_argument("privacy: metric order must be >= 1");
}

double MechanismTable::variance_objective() const {
  double acc = 0.0;
  for (int i = 0; i < input_levels(); ++i) {
    const double x = input_point(i);
    for (int j = 0; j < output_levels(); ++j) {
      const double diff = x - A[j];
      acc += P(i, j) * diff * diff;
    }
  }
  return acc;
}

void MechanismTable::validate_shape() const {
  if (b_in < 1 || b_in > 16 || b_out < 1 || b_out > 16)
    throw std::invalid_argument("table: bit widths must be in [1, 16]");
  if (P.rows() != input_levels() || P.cols() != output_levels())
    throw std::invalid_argument(
        "table: P must be " + std::to_string(input_levels()) + "x" +
        std::to_string(output_levels()) + ", got " +
        std::to_string(P.rows()) + "x" + std::to_string(P.cols()));
  if (A.size() != output_levels())
    throw std::invalid_argument("table: alphabet size mismatch");
  privacy.validate();
}

void flush_small_entries(Eigen::MatrixXd& P, double floor) {
  for (Eigen::Index i = 0; i < P.rows(); ++i)
    for (Eigen::Index j = 0; j < P.cols(); ++j)
      if (P(i, j) < floor) P(i, j) = 0.0;
}

FeasibilityReport check_feasibility(const MechanismTable& table,
                                    const Tolerances& tol) {
  table.validate_shape();
  FeasibilityReport report;
  report.min_entry = table.P.minCoeff();
  report.max_row_sum_dev =
      (table.P.rowwise().sum().array() - 1.0).abs().maxCoeff();

  const Eigen::VectorXd means = table.P * table.A;
  double max_bias = 0.0;
  for (int i = 0; i < table.input_levels(); ++i)
    max_bias = std::max(max_bias, std::abs(means[i] - table.input_point(i)));
  report.max_bias = max_bias;

  const DpStats stats = dp_stats(table.P, table);
  report.max_dp_violation = stats.max_violation;
  report.realized_epsilon = stats.realized;

  report.feasible = report.max_row_sum_dev <= tol.row_sum &&
                    report.min_entry >= 0.0 &&
                    report.max_dp_violation <= tol.dp_log_ratio &&
                    report.max_bias <= tol.bias;
  return report;
}

double realized_epsilon(const MechanismTable& table) {
  table.validate_shape();
  return dp_stats(table.P, table).realized;
}

nlohmann::json serialize(const MechanismTable& table) {
  table.validate_shape();
  nlohmann::json privacy = {{"epsilon", table.privacy.epsilon}};
  if (table.privacy.kind == PrivacyKind::kMetric) {
    privacy["kind"] = "metric";
    privacy["p"] = table.privacy.metric_order;
  } else {
    privacy["kind"] = "pure-ldp";
  }

  nlohmann::json p_rows = nlohmann::json::array();
  for (int i = 0; i < table.input_levels(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < table.output_levels(); ++j) row.push_back(table.P(i, j));
    p_rows.push_back(std::move(row));
  }
  nlohmann::json alphabet = nlohmann::json::array();
  for (int j = 0; j < table.output_levels(); ++j) alphabet.push_back(table.A[j]);

  const FeasibilityReport report = check_feasibility(table);
  return nlohmann::json{
      {"format", "mvu-table"},
      {"version", kTableSchemaVersion},
      {"b_in", table.b_in},
      {"b_out", table.b_out},
      {"privacy", privacy},
      {"P", p_rows},
      {"A", alphabet},
      {"tolerances",
       {{"row_sum", table.declared_tol.row_sum},
        {"dp_log_ratio", table.declared_tol.dp_log_ratio},
        {"bias", table.declared_tol.bias}}},
      {"provenance", table.provenance},
      {"feasibility",
       {{"max_row_sum_dev", json_number(report.max_row_sum_dev)},
        {"min_entry", json_number(report.min_entry)},
        {"max_dp_violation", json_number(report.max_dp_violation)},
        {"max_bias", json_number(report.max_bias)},
        {"realized_epsilon", json_number(report.realized_epsilon)},
        {"feasible", report.feasible}}}};
}

TableFile deserialize(const nlohmann::json& doc, bool strict_feasibility) {
  if (!doc.is_object()) throw std::invalid_argument("table: not an object");
  if (doc.value("format", "") != std::string("mvu-table"))
    throw std::invalid_argument("/format: expected \"mvu-table\"");
  if (doc.value("version", -1) != kTableSchemaVersion)
    throw std::invalid_argument("/version: unsupported schema version");

  MechanismTable table;
  if (!doc.contains("b_in") || !doc["b_in"].is_number_integer())
    throw std::invalid_argument("/b_in: expected an integer");
  if (!doc.contains("b_out") || !doc["b_out"].is_number_integer())
    throw std::invalid_argument("/b_out: expected an integer");
  table.b_in = doc["b_in"].get<int>();
  table.b_out = doc["b_out"].get<int>();
  if (table.b_in < 1 || table.b_in > 16 || table.b_out < 1 || table.b_out > 16)
    throw std::invalid_argument("/b_in,/b_out: bit widths must be in [1, 16]");

  const auto& privacy = doc.at("privacy");
  const std::string kind = privacy.value("kind", "");
  if (kind == "pure-ldp") {
    table.privacy =
        PrivacySpec::pure_ldp(number_from_json(privacy.at("epsilon"),
                                               "/privacy/epsilon"));
  } else if (kind == "metric") {
    table.privacy = PrivacySpec::metric(
        number_from_json(privacy.at("epsilon"), "/privacy/epsilon"),
        number_from_json(privacy.at("p"), "/privacy/p"));
  } else {
    throw std::invalid_argument("/privacy/kind: expected pure-ldp or metric");
  }
  table.privacy.validate();

  const int rows = 1 << table.b_in;
  const int cols = 1 << table.b_out;
  const auto& p_rows = doc.at("P");
  if (!p_rows.is_array() || static_cast<int>(p_rows.size()) != rows)
    throw std::invalid_argument("/P: expected " + std::to_string(rows) +
                                " rows");
  table.P.resize(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const auto& row = p_rows[i];
    if (!row.is_array() || static_cast<int>(row.size()) != cols)
      throw std::invalid_argument("/P/" + std::to_string(i) + ": expected " +
                                  std::to_string(cols) + " entries");
    for (int j = 0; j < cols; ++j) {
      const std::string path =
          "/P/" + std::to_string(i) + "/" + std::to_string(j);
      const double v = number_from_json(row[j], path);
      if (!std::isfinite(v))
        throw std::invalid_argument(path + ": non-finite probability");
      if (v < 0)
        throw std::invalid_argument(path + ": negative probability");
      table.P(i, j) = v;
    }
  }
  flush_small_entries(table.P);

  const auto& alphabet = doc.at("A");
  if (!alphabet.is_array() || static_cast<int>(alphabet.size()) != cols)
    throw std::invalid_argument("/A: expected " + std::to_string(cols) +
                                " entries");
  table.A.resize(cols);
  for (int j = 0; j < cols; ++j) {
    const std::string path = "/A/" + std::to_string(j);
    const double v = number_from_json(alphabet[j], path);
    if (!std::isfinite(v))
      throw std::invalid_argument(path + ": non-finite alphabet entry");
    table.A[j] = v;
  }

  if (doc.contains("tolerances")) {
    const auto& tol = doc["tolerances"];
    table.declared_tol.row_sum =
        number_from_json(tol.at("row_sum"), "/tolerances/row_sum");
    table.declared_tol.dp_log_ratio =
        number_from_json(tol.at("dp_log_ratio"), "/tolerances/dp_log_ratio");
    table.declared_tol.bias = number_from_json(tol.at("bias"),
                                               "/tolerances/bias");
  }
  if (doc.contains("provenance")) table.provenance = doc["provenance"];

  TableFile out;
  out.report = check_feasibility(table);
  if (strict_feasibility && !out.report.feasible)
    throw std::invalid_argument(
        "table fails feasibility at its declared tolerances (dp violation " +
        std::to_string(out.report.max_dp_violation) + ", bias " +
        std::to_string(out.report.max_bias) + ", row-sum dev " +
        std::to_string(out.report.max_row_sum_dev) + ")");
  out.table = std::move(table);
  return out;
}

void save_table(const MechanismTable& table, const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot open " + p.string());
  out << serialize(table).dump(2) << '\n';
}

TableFile load_table(const std::filesystem::path& p, bool strict_feasibility) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  nlohmann::json doc;
  in >> doc;
  return deserialize(doc, strict_feasibility);
}

}  // namespace mvu
