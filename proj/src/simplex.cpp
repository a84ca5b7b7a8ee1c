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

#include "mvu/simplex.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mvu {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDualTol = 1e-9;
constexpr double kPivotTol = 1e-9;
constexpr double kBoundTol = 1e-9;
constexpr double kPhase1Tol = 1e-8;
constexpr int kRefactorInterval = 100;

enum class VarState : unsigned char { kBasic, kAtLower, kAtUpper };

// Bounded-variable primal simplex over the augmented system [A | I | S]
// where logical variables carry row senses and artificial variables (unit
// columns with a sign) absorb initial infeasibility. Basis inverse is a
// kernel LU (unit basis columns eliminated first) plus product-form etas.
class Simplex {
 public:
  explicit Simplex(const LpProblem& p, int max_iterations)
      : n_(p.num_vars),
        m_(static_cast<int>(p.rows.size())),
        max_iterations_(max_iterations) {
    const int total = n_ + 2 * m_;
    col_idx_.resize(n_);
    col_val_.resize(n_);
    for (int r = 0; r < m_; ++r) {
      const auto& row = p.rows[r];
      for (std::size_t k = 0; k < row.idx.size(); ++k) {
        const int j = row.idx[k];
        if (j < 0 || j >= n_) throw std::invalid_argument("lp: bad var index");
        col_idx_[j].push_back(r);
        col_val_[j].push_back(row.val[k]);
      }
    }
    lower_.assign(total, 0.0);
    upper_.assign(total, 0.0);
    cost_.assign(total, 0.0);
    obj_cost_.assign(total, 0.0);
    for (int j = 0; j < n_; ++j) {
      lower_[j] = p.lower[j];
      upper_[j] = p.upper[j];
      obj_cost_[j] = p.objective[j];
      if (lower_[j] == -kInf && upper_[j] == kInf)
        throw std::invalid_argument("lp: free variables are unsupported");
    }
    rhs_.resize(m_);
    art_sign_.assign(m_, 0.0);
    for (int r = 0; r < m_; ++r) {
      rhs_[r] = p.rows[r].rhs;
      const int lj = logical(r);
      switch (p.rows[r].sense) {
        case RowSense::kLe:
          lower_[lj] = 0.0;
          upper_[lj] = kInf;
          break;
        case RowSense::kGe:
          lower_[lj] = -kInf;
          upper_[lj] = 0.0;
          break;
        case RowSense::kEq:
          lower_[lj] = 0.0;
          upper_[lj] = 0.0;
          break;
      }
    }
    state_.assign(total, VarState::kAtLower);
    nb_value_.assign(total, 0.0);
    var_slot_.assign(total, -1);
    basis_.assign(m_, -1);
    xB_.assign(m_, 0.0);
  }

  LpSolution solve() {
    LpSolution sol;
    // Deterministic micro-perturbation of inequality right-hand sides breaks
    // the massive ratio-test ties these column-linked instances produce;
    // exact values are restored before the solution is read out. Equality
    // rows are never perturbed.
    std::vector<double> rhs_exact = rhs_;
    for (int r = 0; r < m_; ++r) {
      const std::uint64_t h =
          (static_cast<std::uint64_t>(r) + 1) * 0x9e3779b97f4a7c15ULL;
      const double delta =
          1e-10 * (1.0 + static_cast<double>(h % 1024) / 1024.0);
      if (lower_[logical(r)] == -kInf) rhs_[r] -= delta;        // >= row
      else if (upper_[logical(r)] == kInf) rhs_[r] += delta;    // <= row
    }
    bool need_phase1 = setup_initial_basis();
    if (need_phase1) {
      cost_.assign(cost_.size(), 0.0);
      for (int r = 0; r < m_; ++r)
        if (art_sign_[r] != 0.0) cost_[artificial(r)] = 1.0;
      const LpStatus st = run();
      if (st == LpStatus::kIterationLimit) {
        sol.status = st;
        sol.iterations = iterations_;
        return sol;
      }
      if (current_objective() > kPhase1Tol) {
        sol.status = LpStatus::kInfeasible;
        sol.iterations = iterations_;
        return sol;
      }
      for (int r = 0; r < m_; ++r) {
        if (art_sign_[r] == 0.0) continue;
        const int aj = artificial(r);
        lower_[aj] = upper_[aj] = 0.0;
        if (state_[aj] != VarState::kBasic) nb_value_[aj] = 0.0;
      }
      drive_out_artificials();
    }
    cost_ = obj_cost_;
    bland_ = false;
    stall_count_ = 0;
    const LpStatus st = run();
    sol.status = st;
    sol.iterations = iterations_;
    if (st != LpStatus::kOptimal) return sol;
    rhs_ = std::move(rhs_exact);
    refactorize();  // recomputes basic values against the exact rhs
    sol.x.assign(n_, 0.0);
    for (int j = 0; j < n_; ++j)
      sol.x[j] = state_[j] == VarState::kBasic ? xB_[var_slot_[j]]
                                               : nb_value_[j];
    sol.objective = 0.0;
    for (int j = 0; j < n_; ++j) sol.objective += obj_cost_[j] * sol.x[j];
    return sol;
  }

 private:
  int logical(int r) const { return n_ + r; }
  int artificial(int r) const { return n_ + m_ + r; }
  bool is_artificial(int j) const { return j >= n_ + m_; }

  double column_coef_unit(int j) const {
    // Unit-column coefficient for logical/artificial variables.
    return j >= n_ + m_ ? art_sign_[j - n_ - m_] : 1.0;
  }
  int column_row_unit(int j) const {
    return j >= n_ + m_ ? j - n_ - m_ : j - n_;
  }

  // Scatter column j into a dense m-vector.
  void column_dense(int j, Eigen::VectorXd& out) const {
    out.setZero(m_);
    if (j < n_) {
      for (std::size_t k = 0; k < col_idx_[j].size(); ++k)
        out[col_idx_[j][k]] += col_val_[j][k];
    } else {
      out[column_row_unit(j)] = column_coef_unit(j);
    }
  }

  double column_dot(int j, const Eigen::VectorXd& y) const {
    if (j < n_) {
      double acc = 0.0;
      for (std::size_t k = 0; k < col_idx_[j].size(); ++k)
        acc += col_val_[j][k] * y[col_idx_[j][k]];
      return acc;
    }
    return column_coef_unit(j) * y[column_row_unit(j)];
  }

  bool setup_initial_basis() {
    for (int j = 0; j < n_; ++j) {
      if (lower_[j] > -kInf) {
        state_[j] = VarState::kAtLower;
        nb_value_[j] = lower_[j];
      } else {
        state_[j] = VarState::kAtUpper;
        nb_value_[j] = upper_[j];
      }
    }
    Eigen::VectorXd rho = Eigen::Map<const Eigen::VectorXd>(rhs_.data(), m_);
    for (int j = 0; j < n_; ++j) {
      if (nb_value_[j] == 0.0) continue;
      for (std::size_t k = 0; k < col_idx_[j].size(); ++k)
        rho[col_idx_[j][k]] -= col_val_[j][k] * nb_value_[j];
    }
    bool any_artificial = false;
    for (int r = 0; r < m_; ++r) {
      const int lj = logical(r);
      if (rho[r] >= lower_[lj] - kBoundTol && rho[r] <= upper_[lj] + kBoundTol) {
        basis_[r] = lj;
        state_[lj] = VarState::kBasic;
        var_slot_[lj] = r;
        xB_[r] = rho[r];
      } else {
        const double s = std::clamp(rho[r], lower_[lj], upper_[lj]);
        state_[lj] = s == lower_[lj] ? VarState::kAtLower : VarState::kAtUpper;
        nb_value_[lj] = s;
        const double resid = rho[r] - s;
        art_sign_[r] = resid >= 0 ? 1.0 : -1.0;
        const int aj = artificial(r);
        lower_[aj] = 0.0;
        upper_[aj] = kInf;
        basis_[r] = aj;
        state_[aj] = VarState::kBasic;
        var_slot_[aj] = r;
        xB_[r] = std::abs(resid);
        any_artificial = true;
      }
    }
    refactorize();
    return any_artificial;
  }

  void refactorize() {
    etas_.clear();
    struct_slots_.clear();
    unit_slots_.clear();
    row_to_kernel_.assign(m_, -1);
    kernel_rows_.clear();
    std::vector<bool> row_is_unit(m_, false);
    for (int r = 0; r < m_; ++r) {
      if (basis_[r] >= n_) {
        unit_slots_.push_back(r);
        row_is_unit[column_row_unit(basis_[r])] = true;
      } else {
        struct_slots_.push_back(r);
      }
    }
    for (int r = 0; r < m_; ++r) {
      if (!row_is_unit[r]) {
        row_to_kernel_[r] = static_cast<int>(kernel_rows_.size());
        kernel_rows_.push_back(r);
      }
    }
    const int k = static_cast<int>(struct_slots_.size());
    if (k != static_cast<int>(kernel_rows_.size()))
      throw std::runtime_error("lp: inconsistent basis structure");
    fstruct_vars_.clear();
    for (int slot : struct_slots_) fstruct_vars_.push_back(basis_[slot]);
    funit_rows_.clear();
    funit_coefs_.clear();
    std::vector<int> row_unit_pos(m_, -1);
    for (std::size_t u = 0; u < unit_slots_.size(); ++u) {
      const int bj = basis_[unit_slots_[u]];
      funit_rows_.push_back(column_row_unit(bj));
      funit_coefs_.push_back(column_coef_unit(bj));
      row_unit_pos[funit_rows_.back()] = static_cast<int>(u);
    }
    unit_row_terms_.assign(unit_slots_.size(), {});
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(k, k);
    for (int c = 0; c < k; ++c) {
      const int j = fstruct_vars_[c];
      for (std::size_t t = 0; t < col_idx_[j].size(); ++t) {
        const int row = col_idx_[j][t];
        const int kr = row_to_kernel_[row];
        if (kr >= 0) {
          K(kr, c) += col_val_[j][t];
        } else {
          unit_row_terms_[row_unit_pos[row]].emplace_back(c, col_val_[j][t]);
        }
      }
    }
    if (k > 0) kernel_lu_.compute(K);
    recompute_basic_values();
  }

  void recompute_basic_values() {
    Eigen::VectorXd rhs_eff = Eigen::Map<const Eigen::VectorXd>(rhs_.data(), m_);
    for (int j = 0; j < n_ + 2 * m_; ++j) {
      if (state_[j] == VarState::kBasic || nb_value_[j] == 0.0) continue;
      if (j < n_) {
        for (std::size_t t = 0; t < col_idx_[j].size(); ++t)
          rhs_eff[col_idx_[j][t]] -= col_val_[j][t] * nb_value_[j];
      } else {
        rhs_eff[column_row_unit(j)] -= column_coef_unit(j) * nb_value_[j];
      }
    }
    ftran_base(rhs_eff);
    for (int r = 0; r < m_; ++r) xB_[r] = rhs_eff[r];
  }

  // Solves B0 z = v in place, B0 being the factorized basis (no etas).
  void ftran_base(Eigen::VectorXd& v) const {
    const int k = static_cast<int>(struct_slots_.size());
    Eigen::VectorXd z_struct;
    if (k > 0) {
      Eigen::VectorXd vk(k);
      for (int i = 0; i < k; ++i) vk[i] = v[kernel_rows_[i]];
      z_struct = kernel_lu_.solve(vk);
    }
    Eigen::VectorXd out(m_);
    for (int i = 0; i < k; ++i) out[struct_slots_[i]] = z_struct[i];
    for (std::size_t u = 0; u < unit_slots_.size(); ++u) {
      double acc = v[funit_rows_[u]];
      for (const auto& [c, coef] : unit_row_terms_[u])
        acc -= coef * z_struct[c];
      out[unit_slots_[u]] = acc / funit_coefs_[u];
    }
    v = std::move(out);
  }

  // Solves B0' y = c in place; c is indexed by basis slot on entry, y by row
  // on exit.
  void btran_base(Eigen::VectorXd& c) const {
    const int k = static_cast<int>(struct_slots_.size());
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m_);
    for (std::size_t u = 0; u < unit_slots_.size(); ++u)
      y[funit_rows_[u]] = c[unit_slots_[u]] / funit_coefs_[u];
    if (k > 0) {
      Eigen::VectorXd rhs(k);
      for (int i = 0; i < k; ++i) {
        const int j = fstruct_vars_[i];
        double acc = c[struct_slots_[i]];
        for (std::size_t t = 0; t < col_idx_[j].size(); ++t) {
          const int r = col_idx_[j][t];
          if (row_to_kernel_[r] < 0) acc -= col_val_[j][t] * y[r];
        }
        rhs[i] = acc;
      }
      Eigen::VectorXd yk = kernel_lu_.transpose().solve(rhs);
      for (int i = 0; i < k; ++i) y[kernel_rows_[i]] = yk[i];
    }
    c = std::move(y);
  }

  Eigen::VectorXd ftran(int col) const {
    Eigen::VectorXd w(m_);
    column_dense(col, w);
    ftran_base(w);
    for (const Eta& e : etas_) {
      const double t = w[e.row] / e.d[e.row];
      if (t != 0.0) w -= t * e.d;
      w[e.row] = t;
    }
    return w;
  }

  Eigen::VectorXd btran_costs() const {
    Eigen::VectorXd c(m_);
    for (int r = 0; r < m_; ++r) c[r] = cost_[basis_[r]];
    for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
      const double s = it->d.dot(c);
      c[it->row] += (c[it->row] - s) / it->d[it->row];
    }
    btran_base(c);
    return c;
  }

  double current_objective() const {
    double obj = 0.0;
    for (int r = 0; r < m_; ++r) obj += cost_[basis_[r]] * xB_[r];
    for (int j = 0; j < n_ + 2 * m_; ++j)
      if (state_[j] != VarState::kBasic) obj += cost_[j] * nb_value_[j];
    return obj;
  }

  int price(const Eigen::VectorXd& y) const {
    int best = -1;
    double best_score = kDualTol;
    const int total = n_ + 2 * m_;
    for (int j = 0; j < total; ++j) {
      if (state_[j] == VarState::kBasic) continue;
      if (lower_[j] == upper_[j]) continue;  // fixed
      if (j >= n_ + m_ && art_sign_[j - n_ - m_] == 0.0) continue;  // unused
      const double d = cost_[j] - column_dot(j, y);
      double score = 0.0;
      if (state_[j] == VarState::kAtLower && d < -kDualTol) score = -d;
      if (state_[j] == VarState::kAtUpper && d > kDualTol) score = d;
      if (score > 0.0) {
        if (bland_) return j;  // first eligible index
        if (score > best_score) {
          best_score = score;
          best = j;
        }
      }
    }
    return best;
  }

  LpStatus run() {
    double prev_obj = current_objective();
    while (iterations_ < max_iterations_) {
      if (static_cast<int>(etas_.size()) >= kRefactorInterval) refactorize();
      ++iterations_;
      const Eigen::VectorXd y = btran_costs();
      const int q = price(y);
      if (q < 0) return LpStatus::kOptimal;
      Eigen::VectorXd w = ftran(q);
      const double sigma = state_[q] == VarState::kAtLower ? 1.0 : -1.0;

      double t_best = kInf;
      int leave_slot = -1;   // -1: none, -2: bound flip
      double leave_pivot = 0.0;
      if (upper_[q] - lower_[q] < kInf) {
        t_best = upper_[q] - lower_[q];
        leave_slot = -2;
      }
      for (int r = 0; r < m_; ++r) {
        const double delta = sigma * w[r];
        const int bv = basis_[r];
        double t = kInf;
        if (delta > kPivotTol && lower_[bv] > -kInf) {
          t = std::max(0.0, (xB_[r] - lower_[bv]) / delta);
        } else if (delta < -kPivotTol && upper_[bv] < kInf) {
          t = std::max(0.0, (upper_[bv] - xB_[r]) / (-delta));
        }
        if (t == kInf) continue;
        const bool better =
            t < t_best - 1e-12 ||
            (t <= t_best + 1e-12 && leave_slot >= 0 &&
             (bland_ ? bv < basis_[leave_slot]
                     : std::abs(w[r]) > std::abs(leave_pivot))) ||
            (t <= t_best + 1e-12 && leave_slot == -2);
        if (better) {
          t_best = std::min(t, t_best);
          leave_slot = r;
          leave_pivot = w[r];
        }
      }
      if (leave_slot == -1) return LpStatus::kUnbounded;

      if (leave_slot == -2) {
        // Bound flip: the entering variable crosses to its other bound.
        for (int r = 0; r < m_; ++r) xB_[r] -= t_best * sigma * w[r];
        if (state_[q] == VarState::kAtLower) {
          state_[q] = VarState::kAtUpper;
          nb_value_[q] = upper_[q];
        } else {
          state_[q] = VarState::kAtLower;
          nb_value_[q] = lower_[q];
        }
      } else {
        const int r = leave_slot;
        const int leaving = basis_[r];
        for (int i = 0; i < m_; ++i) xB_[i] -= t_best * sigma * w[i];
        const double entering_value =
            (state_[q] == VarState::kAtLower ? lower_[q] + t_best
                                             : upper_[q] - t_best);
        const double delta = sigma * w[r];
        state_[leaving] =
            delta > 0 ? VarState::kAtLower : VarState::kAtUpper;
        nb_value_[leaving] =
            delta > 0 ? lower_[leaving] : upper_[leaving];
        var_slot_[leaving] = -1;
        basis_[r] = q;
        state_[q] = VarState::kBasic;
        var_slot_[q] = r;
        xB_[r] = entering_value;
        etas_.push_back(Eta{r, std::move(w)});
      }

      const double obj = current_objective();
      if (obj > prev_obj - 1e-13) {
        if (++stall_count_ > 400 && !bland_) bland_ = true;
      } else {
        stall_count_ = 0;
      }
      prev_obj = obj;
    }
    return LpStatus::kIterationLimit;
  }

  // After phase 1, swap basic artificials for eligible structural or logical
  // columns so their [0,0] bounds cannot block phase 2. Rows where no pivot
  // exists are redundant and keep the artificial at zero.
  void drive_out_artificials() {
    for (int r = 0; r < m_; ++r) {
      if (!is_artificial(basis_[r])) continue;
      Eigen::VectorXd e = Eigen::VectorXd::Zero(m_);
      e[r] = 1.0;
      // row r of B^-1 A via y = B^-T e_r
      Eigen::VectorXd y = e;
      for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
        const double s = it->d.dot(y);
        y[it->row] += (y[it->row] - s) / it->d[it->row];
      }
      btran_base(y);
      int pick = -1;
      double pick_mag = 1e-7;
      for (int j = 0; j < n_ + m_; ++j) {
        if (state_[j] == VarState::kBasic) continue;
        const double v = std::abs(column_dot(j, y));
        if (v > pick_mag) {
          pick_mag = v;
          pick = j;
        }
      }
      if (pick < 0) continue;
      Eigen::VectorXd w = ftran(pick);
      const int leaving = basis_[r];
      state_[leaving] = VarState::kAtLower;
      nb_value_[leaving] = 0.0;
      var_slot_[leaving] = -1;
      basis_[r] = pick;
      state_[pick] = VarState::kBasic;
      var_slot_[pick] = r;
      xB_[r] = nb_value_[pick];
      etas_.push_back(Eta{r, std::move(w)});
      if (static_cast<int>(etas_.size()) >= kRefactorInterval) refactorize();
    }
    refactorize();
  }

  struct Eta {
    int row;
    Eigen::VectorXd d;
  };

  int n_;
  int m_;
  int max_iterations_;
  int iterations_ = 0;
  bool bland_ = false;
  int stall_count_ = 0;

  std::vector<std::vector<int>> col_idx_;
  std::vector<std::vector<double>> col_val_;
  std::vector<double> lower_, upper_, cost_, obj_cost_;
  std::vector<double> rhs_;
  std::vector<double> art_sign_;
  std::vector<VarState> state_;
  std::vector<double> nb_value_;
  std::vector<int> var_slot_;
  std::vector<int> basis_;
  std::vector<double> xB_;

  Eigen::PartialPivLU<Eigen::MatrixXd> kernel_lu_;
  std::vector<int> kernel_rows_;
  std::vector<int> row_to_kernel_;
  std::vector<int> struct_slots_;
  std::vector<int> unit_slots_;
  std::vector<int> fstruct_vars_;   // basis contents at factorization time
  std::vector<int> funit_rows_;
  std::vector<double> funit_coefs_;
  std::vector<std::vector<std::pair<int, double>>> unit_row_terms_;
  std::vector<Eta> etas_;
};

}  // namespace

LpSolution solve_lp(const LpProblem& problem, int max_iterations) {
  if (problem.num_vars == 0)
    throw std::invalid_argument("lp: no variables");
  if (max_iterations <= 0) {
    max_iterations =
        50 * (problem.num_vars + static_cast<int>(problem.rows.size())) +
        20000;
  }
  Simplex solver(problem, max_iterations);
  return solver.solve();
}

}  // namespace mvu
