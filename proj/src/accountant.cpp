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

#include "mvu/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mvu {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(const std::vector<double>& terms) {
  double top = -kInf;
  for (double t : terms) top = std::max(top, t);
  if (top == -kInf) return -kInf;
  if (top == kInf) return kInf;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - top);
  return top + std::log(acc);
}

}  // namespace

Eigen::MatrixXd renyi_matrix(const Eigen::MatrixXd& P, double alpha) {
  if (!(alpha > 1.0))
    throw std::invalid_argument("renyi_matrix: alpha must exceed 1");
  const int rows = static_cast<int>(P.rows());
  const int cols = static_cast<int>(P.cols());
  Eigen::MatrixXd logs(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      if (P(i, j) < 0)
        throw std::invalid_argument("renyi_matrix: negative probability");
      logs(i, j) = P(i, j) > 0 ? std::log(P(i, j)) : -kInf;
    }
  Eigen::MatrixXd D(rows, rows);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(cols));
  for (int i = 0; i < rows; ++i) {
    for (int i2 = 0; i2 < rows; ++i2) {
      if (i == i2) {
        D(i, i2) = 0.0;
        continue;
      }
      terms.clear();
      bool infinite = false;
      for (int j = 0; j < cols; ++j) {
        const bool num_zero = P(i, j) == 0.0;
        const bool den_zero = P(i2, j) == 0.0;
        if (num_zero) continue;  // zero-probability term contributes nothing
        if (den_zero) {
          infinite = true;
          break;
        }
        terms.push_back(alpha * logs(i, j) - (alpha - 1.0) * logs(i2, j));
      }
      if (infinite) {
        D(i, i2) = kInf;
        continue;
      }
      const double lse = log_sum_exp(terms);
      // Rows are distributions, so the divergence is nonnegative; clamp the
      // rounding dust.
      D(i, i2) = std::max(0.0, lse / (alpha - 1.0));
    }
  }
  return D;
}

Eigen::MatrixXd cost_matrix(int levels, double p) {
  if (levels < 2) throw std::invalid_argument("cost_matrix: levels");
  if (!(p >= 1.0)) throw std::invalid_argument("cost_matrix: order");
  Eigen::MatrixXd C(levels, levels);
  for (int i = 0; i < levels; ++i)
    for (int j = 0; j < levels; ++j)
      C(i, j) = p == 1.0 ? std::abs(i - j)
                         : std::pow(std::abs(i - j), p);
  return C;
}

namespace {

void check_dims(const Eigen::MatrixXd& D, const Eigen::MatrixXd& C) {
  if (D.rows() != D.cols() || C.rows() != C.cols() || D.rows() != C.rows())
    throw std::invalid_argument("accountant: D and C must be square and "
                                "conformant");
}

struct PairList {
  std::vector<double> value;  // D entries
  std::vector<double> cost;   // C entries
  bool has_infinite_value = false;
};

PairList flatten(const Eigen::MatrixXd& D, const Eigen::MatrixXd& C) {
  PairList out;
  const int B = static_cast<int>(D.rows());
  out.value.reserve(static_cast<std::size_t>(B) * B);
  out.cost.reserve(static_cast<std::size_t>(B) * B);
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < B; ++j) {
      out.value.push_back(D(i, j));
      out.cost.push_back(C(i, j));
      if (std::isinf(D(i, j)) && D(i, j) > 0) out.has_infinite_value = true;
    }
  return out;
}

void exact_dfs(const PairList& pairs, int slots_left, double budget_left,
               double acc, double max_value, double& best) {
  if (slots_left == 0) {
    best = std::max(best, acc);
    return;
  }
  if (acc + slots_left * max_value <= best) return;  // cannot improve
  for (std::size_t v = 0; v < pairs.value.size(); ++v) {
    if (pairs.cost[v] > budget_left + 1e-12) continue;
    exact_dfs(pairs, slots_left - 1, budget_left - pairs.cost[v],
              acc + pairs.value[v], max_value, best);
  }
}

}  // namespace

double rdp_exact(const Eigen::MatrixXd& D, const Eigen::MatrixXd& C,
                 double budget, int dimension) {
  check_dims(D, C);
  if (dimension < 1) throw std::invalid_argument("rdp_exact: dimension");
  if (budget < 0) throw std::invalid_argument("rdp_exact: budget");
  const double pairs_count = static_cast<double>(D.rows()) * D.rows();
  if (std::pow(pairs_count, dimension) > 1e7)
    throw std::invalid_argument(
        "rdp_exact: instance too large for enumeration; use the LP or "
        "greedy bound");
  const PairList pairs = flatten(D, C);
  if (pairs.has_infinite_value) {
    for (std::size_t v = 0; v < pairs.value.size(); ++v)
      if (std::isinf(pairs.value[v]) && pairs.cost[v] <= budget + 1e-12)
        return kInf;
  }
  double max_value = 0.0;
  for (std::size_t v = 0; v < pairs.value.size(); ++v)
    if (std::isfinite(pairs.value[v]) && pairs.cost[v] <= budget + 1e-12)
      max_value = std::max(max_value, pairs.value[v]);
  double best = 0.0;
  exact_dfs(pairs, dimension, budget, 0.0, max_value, best);
  return best;
}

double rdp_lp_bound(const Eigen::MatrixXd& D, const Eigen::MatrixXd& C,
                    double budget, int dimension) {
  check_dims(D, C);
  if (dimension < 1) throw std::invalid_argument("rdp_lp_bound: dimension");
  if (budget < 0) throw std::invalid_argument("rdp_lp_bound: budget");
  if (budget == 0) return 0.0;
  const PairList pairs = flatten(D, C);
  if (pairs.has_infinite_value) return kInf;

  // Dual: min over mu >= 0 of g(mu) = mu*budget + d * max(0, max_v (D_v -
  // mu C_v)), convex and piecewise linear. Costs |i-j|^p take at most B
  // distinct values, so after keeping the best divergence per distinct cost
  // there are at most B lines mu -> D - mu*c; the minimizer sits at mu = 0
  // or at a kink of their upper envelope. (The max(0, .) leg is the
  // diagonal's c = 0, D = 0 line, which is always present.)
  struct Line {
    double cost;
    double value;
  };
  std::vector<Line> lines;
  for (std::size_t v = 0; v < pairs.value.size(); ++v) {
    const double c = pairs.cost[v];
    const double d_v = pairs.value[v];
    bool merged = false;
    for (Line& l : lines) {
      if (l.cost == c) {
        l.value = std::max(l.value, d_v);
        merged = true;
        break;
      }
    }
    if (!merged) lines.push_back({c, d_v});
  }
  // Sort by slope ascending, i.e. cost descending.
  std::sort(lines.begin(), lines.end(),
            [](const Line& a, const Line& b) { return a.cost > b.cost; });
  auto intersect = [](const Line& a, const Line& b) {
    // D_a - mu c_a = D_b - mu c_b  =>  mu = (D_a - D_b) / (c_a - c_b)
    return (a.value - b.value) / (a.cost - b.cost);
  };
  std::vector<Line> hull;
  for (const Line& l : lines) {
    while (hull.size() >= 2 &&
           intersect(hull[hull.size() - 2], l) <=
               intersect(hull[hull.size() - 2], hull[hull.size() - 1]))
      hull.pop_back();
    if (hull.size() == 1 && hull.back().value <= l.value)
      hull.pop_back();  // same or lower value at every mu >= intersection
    hull.push_back(l);
  }
  std::vector<double> candidates = {0.0};
  for (std::size_t k = 0; k + 1 < hull.size(); ++k) {
    const double mu = intersect(hull[k], hull[k + 1]);
    if (mu > 0 && std::isfinite(mu)) candidates.push_back(mu);
  }
  double best = kInf;
  for (double mu : candidates) {
    double phi = 0.0;
    for (const Line& l : lines)
      phi = std::max(phi, l.value - mu * l.cost);
    best = std::min(best, mu * budget + dimension * phi);
  }
  return best;
}

double rdp_greedy_bound(const Eigen::MatrixXd& D, const Eigen::MatrixXd& C,
                        double budget) {
  check_dims(D, C);
  if (budget < 0) throw std::invalid_argument("rdp_greedy_bound: budget");
  const int B = static_cast<int>(D.rows());
  double best_ratio = -1.0;
  double best_value = 0.0;
  double best_cost = 1.0;
  bool any = false;
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < B; ++j) {
      if (C(i, j) <= 0) continue;  // diagonal pairs have 0/0 ratio
      any = true;
      if (std::isinf(D(i, j))) return kInf;
      const double ratio = D(i, j) / C(i, j);
      if (ratio > best_ratio) {
        best_ratio = ratio;
        best_value = D(i, j);
        best_cost = C(i, j);
      }
    }
  if (!any)
    throw std::invalid_argument(
        "rdp_greedy_bound: no off-diagonal pair with positive cost");
  return budget / best_cost * best_value;
}

std::vector<double> default_alpha_grid() {
  std::vector<double> grid = {1.25, 1.5};
  for (int a = 2; a <= 64; ++a) grid.push_back(static_cast<double>(a));
  return grid;
}

ConversionResult compose_and_convert(std::span<const double> orders,
                                     std::span<const double> eps_per_step,
                                     int steps, double delta) {
  if (orders.empty() || orders.size() != eps_per_step.size())
    throw std::invalid_argument("compose_and_convert: empty or mismatched "
                                "order grid");
  if (steps < 1) throw std::invalid_argument("compose_and_convert: steps");
  if (!(delta > 0 && delta < 1))
    throw std::invalid_argument("compose_and_convert: delta");
  ConversionResult best{kInf, 0.0};
  const double log_term = std::log(1.0 / delta);
  for (std::size_t k = 0; k < orders.size(); ++k) {
    if (!(orders[k] > 1.0))
      throw std::invalid_argument("compose_and_convert: order must be > 1");
    const double eps = steps * eps_per_step[k] + log_term / (orders[k] - 1.0);
    if (eps < best.epsilon) best = {eps, orders[k]};
  }
  return best;
}

RenyiProfile build_renyi_profile(const MechanismTable& table,
                                 double metric_order, double sensitivity,
                                 int dimension, AccountMethod method,
                                 std::span<const double> orders) {
  table.validate_shape();
  if (!(metric_order >= 1.0))
    throw std::invalid_argument("account: metric order must be >= 1");
  if (!(sensitivity > 0))
    throw std::invalid_argument("account: sensitivity must be positive");
  RenyiProfile profile;
  profile.orders.assign(orders.begin(), orders.end());
  profile.metric_order = metric_order;
  profile.sensitivity = sensitivity;
  profile.dimension = dimension;
  profile.method = method;
  const int B = table.input_levels();
  profile.budget = std::pow((B - 1) * sensitivity, metric_order);
  const Eigen::MatrixXd C = cost_matrix(B, metric_order);
  profile.per_step_eps.reserve(orders.size());
  for (double alpha : orders) {
    const Eigen::MatrixXd D = renyi_matrix(table.P, alpha);
    double eps = 0.0;
    switch (method) {
      case AccountMethod::kGreedy:
        eps = rdp_greedy_bound(D, C, profile.budget);
        break;
      case AccountMethod::kLp:
        eps = rdp_lp_bound(D, C, profile.budget, dimension);
        break;
      case AccountMethod::kExact:
        eps = rdp_exact(D, C, profile.budget, dimension);
        break;
    }
    profile.per_step_eps.push_back(eps);
  }
  return profile;
}

AccountLedger account(const MechanismTable& table, double metric_order,
                      double sensitivity, int dimension, int steps,
                      double delta, AccountMethod method,
                      std::span<const double> orders) {
  AccountLedger ledger;
  ledger.profile = build_renyi_profile(table, metric_order, sensitivity,
                                       dimension, method, orders);
  ledger.steps = steps;
  ledger.delta = delta;
  ledger.composed_eps.reserve(orders.size());
  for (double eps : ledger.profile.per_step_eps)
    ledger.composed_eps.push_back(steps * eps);
  const ConversionResult conv = compose_and_convert(
      ledger.profile.orders, ledger.profile.per_step_eps, steps, delta);
  ledger.final_epsilon = conv.epsilon;
  ledger.alpha_star = conv.alpha_star;
  return ledger;
}

}  // namespace mvu
