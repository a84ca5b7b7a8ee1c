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

#include "mvu/designer.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mvu/lattice.hpp"
#include "mvu/rng.hpp"
#include "mvu/simplex.hpp"
#include "mvu/version.hpp"

namespace mvu {

namespace {

constexpr double kMaxDesignEpsilon = 20.0;

Eigen::VectorXd unit_grid(int levels) {
  Eigen::VectorXd x(levels);
  for (int i = 0; i < levels; ++i)
    x[i] = static_cast<double>(i) / (levels - 1);
  return x;
}

double eq2_objective(const Eigen::MatrixXd& P, const Eigen::VectorXd& A,
                     const Eigen::VectorXd& x) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < P.rows(); ++i)
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
      const double diff = x[i] - A[j];
      acc += P(i, j) * diff * diff;
    }
  return acc;
}

double max_bias(const Eigen::MatrixXd& P, const Eigen::VectorXd& A,
                const Eigen::VectorXd& x) {
  return (P * A - x).cwiseAbs().maxCoeff();
}

Eigen::MatrixXd grr_matrix(double epsilon, int levels) {
  const double e = std::exp(epsilon);
  const double denom = levels + e - 1.0;
  Eigen::MatrixXd P =
      Eigen::MatrixXd::Constant(levels, levels, 1.0 / denom);
  P.diagonal().array() += (e - 1.0) / denom;
  return P;
}

// Alphabet of generalized RR in closed form: a_i = (x_i (B + e^eps - 1)
// - B/2) / (e^eps - 1). Used as the feasible starting alphabet.
Eigen::VectorXd grr_alphabet(double epsilon, int levels) {
  const double e = std::exp(epsilon);
  const Eigen::VectorXd x = unit_grid(levels);
  return ((levels + e - 1.0) * x.array() - levels / 2.0) / (e - 1.0);
}

// Alphabet of the identity/uniform mixture Q0 = t I + (1-t)/B 11' on the
// output grid, which is exactly unbiased for a = (y - (1-t)/2)/t. For
// square designs t comes from the ratio bound between adjacent inputs; for
// non-square designs the start point is Dither * Q0 and t is set by the
// within-cell ratio slope of that mixture, so the LP is feasible at this
// alphabet in either case.
Eigen::VectorXd metric_mixture_alphabet(double epsilon, double metric_order,
                                        int in_levels, int out_levels) {
  const double out_gap = 1.0 / (out_levels - 1);
  double t;
  if (in_levels == out_levels) {
    const double bound =
        std::exp(epsilon * std::pow(out_gap, metric_order));
    t = (bound - 1.0) / (out_levels + bound - 1.0);
  } else {
    const double slope = epsilon * out_gap;
    t = slope / (out_levels + slope);
  }
  const Eigen::VectorXd y = unit_grid(out_levels);
  return (y.array() - (1.0 - t) / 2.0) / t;
}

struct Candidate {
  Eigen::MatrixXd P;
  Eigen::VectorXd A;
  double objective = std::numeric_limits<double>::infinity();
  double bias = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool ok = false;
  std::string note;
};

// P-step: minimize the variance objective over P at fixed alphabet.
// lambda < 0 requests exact unbiasedness rows; otherwise the bias enters
// through L1 slack variables weighted by lambda.
std::optional<Eigen::MatrixXd> solve_pstep(const PrivacySpec& privacy,
                                           const Eigen::VectorXd& x,
                                           int B_out,
                                           const Eigen::VectorXd& A,
                                           double lambda) {
  const int B_in = static_cast<int>(x.size());
  LpProblem lp;
  std::vector<int> pv(static_cast<std::size_t>(B_in) * B_out);
  for (int i = 0; i < B_in; ++i)
    for (int j = 0; j < B_out; ++j) {
      const double diff = x[i] - A[j];
      pv[static_cast<std::size_t>(i) * B_out + j] =
          lp.add_var(diff * diff, 0.0, 1.0);
    }
  auto p = [&](int i, int j) {
    return pv[static_cast<std::size_t>(i) * B_out + j];
  };

  for (int i = 0; i < B_in; ++i) {
    auto& row = lp.add_row(RowSense::kEq, 1.0);
    for (int j = 0; j < B_out; ++j) add_term(row, p(i, j), 1.0);
  }

  if (lambda < 0) {
    for (int i = 0; i < B_in; ++i) {
      auto& row = lp.add_row(RowSense::kEq, x[i]);
      for (int j = 0; j < B_out; ++j) add_term(row, p(i, j), A[j]);
    }
  } else {
    for (int i = 0; i < B_in; ++i) {
      const int u = lp.add_var(lambda);
      const int v = lp.add_var(lambda);
      auto& row = lp.add_row(RowSense::kEq, x[i]);
      for (int j = 0; j < B_out; ++j) add_term(row, p(i, j), A[j]);
      add_term(row, u, -1.0);
      add_term(row, v, 1.0);
    }
  }

  if (privacy.kind == PrivacyKind::kPureLdp) {
    const double ratio = std::exp(privacy.epsilon);
    for (int j = 0; j < B_out; ++j) {
      const int m = lp.add_var(0.0, 0.0, 1.0);
      for (int i = 0; i < B_in; ++i) {
        auto& lo = lp.add_row(RowSense::kGe, 0.0);
        add_term(lo, p(i, j), 1.0);
        add_term(lo, m, -1.0);
        auto& hi = lp.add_row(RowSense::kLe, 0.0);
        add_term(hi, p(i, j), 1.0);
        add_term(hi, m, -ratio);
      }
    }
  } else if (privacy.metric_order == 1.0) {
    // Adjacent-row constraints imply all pairs for the L1 metric.
    const double ratio =
        std::exp(privacy.epsilon * (x[1] - x[0]));
    for (int j = 0; j < B_out; ++j) {
      for (int i = 0; i + 1 < B_in; ++i) {
        auto& up = lp.add_row(RowSense::kLe, 0.0);
        add_term(up, p(i + 1, j), 1.0);
        add_term(up, p(i, j), -ratio);
        auto& dn = lp.add_row(RowSense::kLe, 0.0);
        add_term(dn, p(i, j), 1.0);
        add_term(dn, p(i + 1, j), -ratio);
      }
    }
  } else {
    for (int j = 0; j < B_out; ++j) {
      for (int i = 0; i < B_in; ++i) {
        for (int i2 = i + 1; i2 < B_in; ++i2) {
          const double d = privacy.distance(x[i], x[i2]);
          if (privacy.epsilon * d > 500.0) continue;
          const double ratio = std::exp(privacy.epsilon * d);
          auto& up = lp.add_row(RowSense::kLe, 0.0);
          add_term(up, p(i2, j), 1.0);
          add_term(up, p(i, j), -ratio);
          auto& dn = lp.add_row(RowSense::kLe, 0.0);
          add_term(dn, p(i, j), 1.0);
          add_term(dn, p(i2, j), -ratio);
        }
      }
    }
  }

  const LpSolution sol = solve_lp(lp);
  if (sol.status != LpStatus::kOptimal) return std::nullopt;
  Eigen::MatrixXd P(B_in, B_out);
  for (int i = 0; i < B_in; ++i)
    for (int j = 0; j < B_out; ++j) P(i, j) = sol.x[p(i, j)];
  // Tolerance dust from the solver: tiny or slightly negative entries are
  // exact zeros, and dead output letters must be exactly dead so the
  // alphabet steps can pin them.
  flush_small_entries(P);
  return P;
}

// A-step with exact unbiasedness: minimize sum_j w_j a_j^2 - 2 s_j a_j
// subject to P a = x, via the KKT system. Keeps the previous alphabet when
// the system cannot be solved to working accuracy.
bool astep_hard(const Eigen::MatrixXd& P, const Eigen::VectorXd& x,
                Eigen::VectorXd& A) {
  const int B_out = static_cast<int>(P.cols());
  const int B_in = static_cast<int>(P.rows());
  // Letters no row ever emits are pinned to zero; keeping them in the KKT
  // system only degrades its conditioning.
  std::vector<int> live;
  for (int j = 0; j < B_out; ++j)
    if (P.col(j).maxCoeff() > 0.0) live.push_back(j);
  const int L = static_cast<int>(live.size());
  Eigen::MatrixXd Pl(B_in, L);
  for (int c = 0; c < L; ++c) Pl.col(c) = P.col(live[static_cast<std::size_t>(c)]);
  Eigen::VectorXd w = Pl.colwise().sum();
  Eigen::VectorXd s = Pl.transpose() * x;
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(L + B_in, L + B_in);
  kkt.topLeftCorner(L, L) = (2.0 * w).asDiagonal();
  kkt.topRightCorner(L, B_in) = Pl.transpose();
  kkt.bottomLeftCorner(B_in, L) = Pl;
  Eigen::VectorXd rhs(L + B_in);
  rhs.head(L) = 2.0 * s;
  rhs.tail(B_in) = x;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(kkt);
  const Eigen::VectorXd sol = cod.solve(rhs);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(B_out);
  for (int c = 0; c < L; ++c) a[live[static_cast<std::size_t>(c)]] = sol[c];
  if (!a.allFinite() || (P * a - x).cwiseAbs().maxCoeff() > 1e-8)
    return false;
  A = a;
  return true;
}

void astep_penalty(const Eigen::MatrixXd& P, const Eigen::VectorXd& x,
                   double lambda, Eigen::VectorXd& A) {
  Eigen::VectorXd w = P.colwise().sum();
  Eigen::VectorXd s = P.transpose() * x;
  Eigen::MatrixXd M = lambda * (P.transpose() * P);
  M.diagonal() += w;
  // Dead letters have a zero row and a zero right-hand side; the ridge pins
  // them at zero instead of leaving them in the null space.
  M.diagonal().array() += 1e-10;
  Eigen::VectorXd rhs = s + lambda * (P.transpose() * x);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  if (ldlt.info() == Eigen::Success) {
    const Eigen::VectorXd a = ldlt.solve(rhs);
    if (a.allFinite()) {
      A = a;
      return;
    }
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(M);
  const Eigen::VectorXd a = cod.solve(rhs);
  if (a.allFinite()) A = a;
}

void renormalize_rows(Eigen::MatrixXd& P) {
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    const double sum = P.row(i).sum();
    if (sum > 0) P.row(i) /= sum;
  }
}

// Post-solve cleanup. The LP satisfies the ratio constraints to its
// feasibility tolerance in the linear scale; tiny absolute slack on small
// probabilities can still be a visible log-ratio breach, so the ratios are
// clipped exactly and rows renormalized (which perturbs any pairwise
// log-ratio by no more than the renormalization spread).
void repair_pure(Eigen::MatrixXd& P, double epsilon) {
  const double ratio = std::exp(epsilon);
  for (Eigen::Index j = 0; j < P.cols(); ++j) {
    const double top = P.col(j).maxCoeff();
    if (top <= 1e-9) {
      P.col(j).setZero();
      continue;
    }
    const double floor = top / ratio;
    for (Eigen::Index i = 0; i < P.rows(); ++i)
      if (P(i, j) < floor) P(i, j) = floor;
  }
  renormalize_rows(P);
}

void repair_metric(Eigen::MatrixXd& P, const PrivacySpec& privacy,
                   const Eigen::VectorXd& x) {
  const double gap = x[1] - x[0];
  const double ratio =
      std::exp(privacy.epsilon * std::pow(gap, privacy.metric_order));
  for (Eigen::Index j = 0; j < P.cols(); ++j) {
    for (Eigen::Index i = 1; i < P.rows(); ++i) {
      const double hi = P(i - 1, j) * ratio;
      const double lo = P(i - 1, j) / ratio;
      P(i, j) = std::clamp(P(i, j), lo, hi);
    }
  }
  renormalize_rows(P);
}

double unbiasedness_condition(const Eigen::MatrixXd& P) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(P);
  const auto& sv = svd.singularValues();
  const double smin = sv[sv.size() - 1];
  if (smin <= 0) return std::numeric_limits<double>::infinity();
  return sv[0] / smin;
}

struct DirectDesigner {
  PrivacySpec privacy;
  int B_in;
  int B_out;
  SolverOptions opts;
  Eigen::VectorXd x;

  Candidate hard_alternation(Eigen::VectorXd A) const {
    Candidate c;
    double prev = std::numeric_limits<double>::infinity();
    for (int outer = 0; outer < opts.max_outer_iterations; ++outer) {
      ++c.iterations;
      auto P = solve_pstep(privacy, x, B_out, A, -1.0);
      if (!P) {
        c.note = c.ok ? "p-step stopped making progress" : "p-step infeasible";
        return c;
      }
      astep_hard(*P, x, A);
      c.P = std::move(*P);
      c.A = A;
      c.ok = true;
      const double obj = eq2_objective(c.P, c.A, x);
      c.objective = obj;
      c.bias = max_bias(c.P, c.A, x);
      if (prev - obj <= opts.objective_tol * std::max(1.0, std::abs(obj)))
        break;
      prev = obj;
    }
    return c;
  }

  Candidate penalty_ladder(Eigen::VectorXd A) const {
    Candidate c;
    double lambda = std::max(opts.penalty_weight, 1.0);
    double prev = std::numeric_limits<double>::infinity();
    for (int outer = 0; outer < opts.max_outer_iterations; ++outer) {
      ++c.iterations;
      auto P = solve_pstep(privacy, x, B_out, A, lambda);
      if (!P) {
        if (!c.ok) c.note = "penalty p-step failed";
        return c;
      }
      astep_penalty(*P, x, lambda, A);
      c.P = std::move(*P);
      c.A = A;
      c.ok = true;
      c.objective = eq2_objective(c.P, c.A, x);
      c.bias = max_bias(c.P, c.A, x);
      const double score = c.objective + lambda * c.bias * c.bias;
      const bool saturated = lambda >= 1e6;
      if (saturated &&
          prev - score <= opts.objective_tol * std::max(1.0, score))
        break;
      prev = score;
      lambda = std::min(2.0 * lambda, 1e6);
    }
    return c;
  }

  Candidate hard_polish(Candidate from) const {
    if (!from.ok) return from;
    Candidate c;
    c.iterations = from.iterations;
    Eigen::VectorXd A = from.A;
    for (int outer = 0; outer < 4; ++outer) {
      ++c.iterations;
      auto P = solve_pstep(privacy, x, B_out, A, -1.0);
      if (!P) {
        if (!c.ok) c.note = "hard polish infeasible at explored alphabet";
        return c;
      }
      astep_hard(*P, x, A);
      c.P = std::move(*P);
      c.A = A;
      c.ok = true;
      const double obj = eq2_objective(c.P, c.A, x);
      if (c.objective - obj <=
          opts.objective_tol * std::max(1.0, std::abs(obj)))
        { c.objective = obj; c.bias = max_bias(c.P, c.A, x); break; }
      c.objective = obj;
      c.bias = max_bias(c.P, c.A, x);
    }
    return c;
  }
};

bool lexicographic_less(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (a(i, j) < b(i, j)) return true;
      if (a(i, j) > b(i, j)) return false;
    }
  return false;
}

DesignResult design_direct(const PrivacySpec& spec, int b_in, int b_out,
                           const SolverOptions& opts) {
  const int B_in = 1 << b_in;
  const int B_out = 1 << b_out;
  DirectDesigner designer{spec, B_in, B_out, opts, unit_grid(B_in)};

  Eigen::VectorXd A0;
  if (opts.init == DesignInit::kUniform) {
    A0 = unit_grid(B_out);
  } else if (spec.kind == PrivacyKind::kPureLdp) {
    A0 = grr_alphabet(spec.epsilon, B_out);
  } else if (B_in == B_out || spec.metric_order != 1.0) {
    A0 = metric_mixture_alphabet(spec.epsilon, spec.metric_order, B_in,
                                 B_out);
  } else {
    // Non-square L1-metric designs start from the alphabet of the square
    // b_out-level design at the budget whose dithered composition onto this
    // input grid stays feasible: that composition witnesses LP feasibility
    // at this alphabet, and its scale is right where the plain mixture
    // alphabet is wildly oversized.
    const double gap_out = 1.0 / (B_out - 1);
    const double eps_sq = std::log1p(spec.epsilon * gap_out) / gap_out;
    SolverOptions inner = opts;
    inner.restarts = std::min(opts.restarts, 1);
    A0 = design_direct(PrivacySpec::metric(eps_sq, 1.0), b_out, b_out, inner)
             .table.A;
  }

  Rng rng(opts.seed);
  std::vector<Candidate> candidates;
  int total_iterations = 0;
  const double span = A0.maxCoeff() - A0.minCoeff();
  for (int r = 0; r <= std::max(0, opts.restarts); ++r) {
    Eigen::VectorXd A = A0;
    if (r > 0) {
      Rng sub = rng.derive(static_cast<std::uint64_t>(r));
      for (Eigen::Index j = 0; j < A.size(); ++j)
        A[j] = A[j] * (1.0 + 0.05 * sub.normal()) +
               0.02 * span * sub.normal();
    }
    if (opts.method == DesignMethod::kHard) {
      Candidate base = designer.hard_alternation(A);
      total_iterations += base.iterations;
      if (base.ok && opts.explore) {
        Candidate explored = designer.penalty_ladder(base.A);
        total_iterations += explored.iterations;
        Candidate polished = designer.hard_polish(explored);
        total_iterations += polished.iterations;
        if (polished.ok) candidates.push_back(std::move(polished));
      }
      candidates.push_back(std::move(base));
    } else {
      Candidate c = designer.penalty_ladder(A);
      total_iterations += c.iterations;
      candidates.push_back(std::move(c));
    }
  }

  DesignResult result;
  result.iterations = total_iterations;
  const Candidate* best = nullptr;
  const double weight = std::max(opts.penalty_weight, 1.0);
  for (const Candidate& c : candidates) {
    if (!c.ok) continue;
    if (!best) {
      best = &c;
      continue;
    }
    const double sc = c.objective + weight * c.bias * c.bias;
    const double sb = best->objective + weight * best->bias * best->bias;
    if (sc < sb - 1e-12 ||
        (std::abs(sc - sb) <= 1e-12 && lexicographic_less(c.P, best->P)))
      best = &c;
  }
  if (!best) {
    // Return the initial feasible construction so callers still get an
    // artifact, flagged as non-converged.
    result.converged = false;
    result.diagnostic = "no solver candidate finished; see provenance";
    MechanismTable table;
    table.b_in = b_in;
    table.b_out = b_out;
    table.privacy = spec;
    table.P = Eigen::MatrixXd::Constant(B_in, B_out, 1.0 / B_out);
    table.A = A0;
    result.table = std::move(table);
    result.objective = eq2_objective(result.table.P, result.table.A,
                                     designer.x);
    result.report = check_feasibility(result.table);
    return result;
  }

  Eigen::MatrixXd P = best->P;
  Eigen::VectorXd A = best->A;
  if (spec.kind == PrivacyKind::kPureLdp) {
    repair_pure(P, spec.epsilon);
  } else {
    repair_metric(P, spec, designer.x);
  }
  flush_small_entries(P);
  renormalize_rows(P);
  if (opts.method == DesignMethod::kHard) {
    astep_hard(P, designer.x, A);
  } else {
    astep_penalty(P, designer.x, 1e6, A);
  }

  // Canonical column order: alphabet ascending. Output letters are labels,
  // so this permutation changes nothing observable.
  {
    std::vector<int> order(static_cast<std::size_t>(B_out));
    for (int j = 0; j < B_out; ++j) order[static_cast<std::size_t>(j)] = j;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return A[a] < A[b]; });
    Eigen::MatrixXd P_sorted(B_in, B_out);
    Eigen::VectorXd A_sorted(B_out);
    for (int j = 0; j < B_out; ++j) {
      P_sorted.col(j) = P.col(order[static_cast<std::size_t>(j)]);
      A_sorted[j] = A[order[static_cast<std::size_t>(j)]];
    }
    P = std::move(P_sorted);
    A = std::move(A_sorted);
  }

  MechanismTable table;
  table.b_in = b_in;
  table.b_out = b_out;
  table.privacy = spec;
  table.P = std::move(P);
  table.A = std::move(A);
  const double bias = max_bias(table.P, table.A, designer.x);
  if (opts.method == DesignMethod::kPenalty)
    table.declared_tol.bias = std::max(1e-4, bias * (1.0 + 1e-9));

  result.objective = eq2_objective(table.P, table.A, designer.x);
  const double cond = unbiasedness_condition(table.P);
  // LP vertices are frequently rank-deficient (proportional columns) while
  // their minimum-norm alphabet is perfectly usable, so raw cond(P) cannot
  // be the degeneracy gate. The failure mode that matters shows up as an
  // exploding alphabet relative to the scale any epsilon-feasible unbiased
  // mechanism needs, or as unachievable unbiasedness.
  const double end_to_end_eps =
      std::min(spec.kind == PrivacyKind::kPureLdp
                   ? spec.epsilon
                   : spec.epsilon,  // distance(0,1) = 1 for every order
               kMaxDesignEpsilon);
  const double natural_scale =
      grr_alphabet(end_to_end_eps, B_out).cwiseAbs().maxCoeff();
  const double amplification_limit = 20.0 * std::max(1.0, natural_scale);
  const double alphabet_magnitude = table.A.cwiseAbs().maxCoeff();
  const bool degenerate = alphabet_magnitude > amplification_limit;
  table.provenance = {
      {"tool", std::string("mvu ") + kVersionString},
      {"mechanism",
       spec.kind == PrivacyKind::kPureLdp ? "mvu" : "mvu-metric"},
      {"method", opts.method == DesignMethod::kHard ? "hard" : "penalty"},
      {"init",
       opts.init == DesignInit::kDitherThenGrr ? "dither-then-grr"
                                               : "uniform"},
      {"seed", opts.seed},
      {"restarts", opts.restarts},
      {"iterations", total_iterations},
      {"objective", result.objective},
      {"bias", bias},
      {"unbiasedness_condition", cond},
  };
  result.table = std::move(table);
  result.report = check_feasibility(result.table);
  result.converged = result.report.feasible && !degenerate;
  if (!result.report.feasible)
    result.diagnostic = "solution violates declared tolerances";
  else if (degenerate)
    result.diagnostic =
        "unbiasedness system is degenerate (alphabet magnitude " +
        std::to_string(alphabet_magnitude) + " exceeds " +
        std::to_string(amplification_limit) + ", condition " +
        std::to_string(cond) + "); constraints force near-identical rows";
  return result;
}

// Tall designs: dither onto a mid-resolution grid, then apply a
// mid-resolution table. Mixing rows of a pure-DP table keeps pure DP
// exactly; for the L1 metric the mid table is designed at the slightly
// smaller budget log(1 + eps*gap)/gap so that the within-cell ratio slope of
// the mixture stays below eps.
DesignResult design_composed(const PrivacySpec& spec, int b_in, int b_out,
                             const SolverOptions& opts) {
  constexpr int kMidBits = 5;
  const int B_mid = 1 << kMidBits;
  PrivacySpec mid_spec = spec;
  if (spec.kind == PrivacyKind::kMetric) {
    const double gap = 1.0 / (B_mid - 1);
    mid_spec.epsilon = std::log1p(spec.epsilon * gap) / gap;
  }
  DesignResult inner = design_direct(mid_spec, kMidBits, b_out, opts);

  const int B_in = 1 << b_in;
  MechanismTable table;
  table.b_in = b_in;
  table.b_out = b_out;
  table.privacy = spec;
  table.P = dither_matrix(B_in, B_mid) * inner.table.P;
  flush_small_entries(table.P);
  table.A = inner.table.A;
  table.declared_tol = inner.table.declared_tol;
  table.provenance = inner.table.provenance;
  table.provenance["composed"] = {
      {"mid_bits", kMidBits},
      {"mid_epsilon", mid_spec.epsilon},
  };

  DesignResult result;
  result.objective =
      eq2_objective(table.P, table.A, unit_grid(B_in));
  result.iterations = inner.iterations;
  result.report = check_feasibility(table);
  result.converged = inner.converged && result.report.feasible;
  if (!result.converged)
    result.diagnostic = inner.converged
                            ? "composed table violates tolerances"
                            : "mid-resolution design: " + inner.diagnostic;
  result.table = std::move(table);
  return result;
}

}  // namespace

Eigen::MatrixXd dither_matrix(int levels_from, int levels_to) {
  const DitherGrid grid = DitherGrid::unit(levels_to);
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(levels_from, levels_to);
  for (int i = 0; i < levels_from; ++i) {
    const double xi = static_cast<double>(i) / (levels_from - 1);
    const DitherLaw law = dither_law(xi, grid);
    W(i, law.lower) += 1.0 - law.prob_upper;
    if (law.upper != law.lower) W(i, law.upper) += law.prob_upper;
  }
  return W;
}

MechanismTable build_bitwise_rr(double epsilon, int bits) {
  if (!(epsilon > 0) || !std::isfinite(epsilon))
    throw std::invalid_argument("bitwise rr: epsilon must be positive");
  if (bits < 1 || bits > 16)
    throw std::invalid_argument("bitwise rr: bits must be in [1, 16]");
  const double per_bit = epsilon / bits;
  const double e = std::exp(per_bit);
  const double a0 = -1.0 / (e - 1.0);
  const double a1 = e / (e - 1.0);
  if (!std::isfinite(a0) || !std::isfinite(a1) || std::abs(a0) > 1e12)
    throw std::range_error(
        "bitwise rr: per-bit alphabet magnitude " + std::to_string(a0) +
        " out of range at epsilon/b = " + std::to_string(per_bit));
  const double keep = 1.0 / (1.0 + std::exp(-per_bit));
  const int B = 1 << bits;

  MechanismTable table;
  table.b_in = bits;
  table.b_out = bits;
  table.privacy = PrivacySpec::pure_ldp(epsilon);
  table.P.resize(B, B);
  for (int i = 0; i < B; ++i)
    for (int y = 0; y < B; ++y) {
      double prob = 1.0;
      for (int bit = 0; bit < bits; ++bit) {
        const bool match = ((i >> bit) & 1) == ((y >> bit) & 1);
        prob *= match ? keep : 1.0 - keep;
      }
      table.P(i, y) = prob;
    }
  table.A.resize(B);
  for (int y = 0; y < B; ++y) {
    double acc = 0.0;
    for (int bit = 0; bit < bits; ++bit) {
      const double t = ((y >> bit) & 1) ? a1 : a0;
      acc += static_cast<double>(1 << bit) * t;
    }
    table.A[y] = acc / (B - 1);
  }
  table.provenance = {
      {"tool", std::string("mvu ") + kVersionString},
      {"mechanism", "brr"},
      {"bit_weights", "bit j of (B-1)z decodes with weight 2^j/(B-1)"},
  };
  return table;
}

MechanismTable build_generalized_rr(double epsilon, int bits) {
  if (!(epsilon > 0) || !std::isfinite(epsilon))
    throw std::invalid_argument("generalized rr: epsilon must be positive");
  if (bits < 1 || bits > 16)
    throw std::invalid_argument("generalized rr: bits must be in [1, 16]");
  const int B = 1 << bits;
  MechanismTable table;
  table.b_in = bits;
  table.b_out = bits;
  table.privacy = PrivacySpec::pure_ldp(epsilon);
  table.P = grr_matrix(epsilon, B);
  const Eigen::VectorXd x = unit_grid(B);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(table.P);
  table.A = lu.solve(x);
  if (!table.A.allFinite() ||
      (table.P * table.A - x).cwiseAbs().maxCoeff() > 1e-9)
    throw std::runtime_error(
        "generalized rr: unbiasedness system is singular");
  table.provenance = {
      {"tool", std::string("mvu ") + kVersionString},
      {"mechanism", "grr"},
  };
  return table;
}

DesignResult design_mvu(const PrivacySpec& spec, int b_in, int b_out,
                        const SolverOptions& opts) {
  spec.validate();
  if (b_in < 1 || b_in > 12 || b_out < 1 || b_out > 8)
    throw std::invalid_argument("design: b_in in [1,12], b_out in [1,8]");
  if (spec.epsilon > kMaxDesignEpsilon)
    throw std::invalid_argument(
        "design: epsilon above " + std::to_string(kMaxDesignEpsilon) +
        " is numerically meaningless for table design");
  const int B_in = 1 << b_in;
  const int B_out = 1 << b_out;

  const bool direct =
      spec.kind == PrivacyKind::kPureLdp
          ? (B_in <= 32 && B_in * B_out <= 1024)
          : (spec.metric_order == 1.0 ? (B_in <= 32 && B_out <= 32)
                                      : (B_in <= 16 && B_out <= 16));
  if (direct) return design_direct(spec, b_in, b_out, opts);

  if (spec.kind == PrivacyKind::kMetric && spec.metric_order != 1.0) {
    DesignResult result = design_direct(spec, 3, std::min(b_out, 3), opts);
    result.converged = false;
    result.diagnostic =
        "metric design with p != 1 is limited to b_in <= 4; returned a "
        "reduced-resolution table";
    return result;
  }
  return design_composed(spec, b_in, b_out, opts);
}

DesignResult design_mvu_metric_l1_halved(double epsilon, int b_in, int b_out,
                                         const SolverOptions& opts) {
  return design_mvu(PrivacySpec::metric(epsilon / 2.0, 1.0), b_in, b_out,
                    opts);
}

}  // namespace mvu
