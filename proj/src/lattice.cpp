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

#include "mvu/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mvu {

DitherGrid::DitherGrid(int levels, Interval range)
    : levels_(levels), range_(range) {
  if (levels < 2) throw std::invalid_argument("DitherGrid: levels must be >= 2");
  if (!(range.lo < range.hi))
    throw std::invalid_argument("DitherGrid: empty range");
  spacing_ = (range.hi - range.lo) / static_cast<double>(levels - 1);
}

bool DitherGrid::contains(double x) const {
  return x >= range_.lo - kSnapTolerance && x <= range_.hi + kSnapTolerance;
}

std::optional<int> DitherGrid::snap_index(double x) const {
  const double rel = (x - range_.lo) / spacing_;
  const int k = static_cast<int>(std::lround(rel));
  if (k < 0 || k >= levels_) return std::nullopt;
  if (std::abs(x - point(k)) <= kSnapTolerance) return k;
  return std::nullopt;
}

DitherLaw dither_law(double x, const DitherGrid& grid) {
  if (!grid.contains(x))
    throw std::domain_error("dither: input " + std::to_string(x) +
                            " outside grid range");
  if (auto k = grid.snap_index(x)) return {*k, *k, 0.0};
  int lower = static_cast<int>(
      std::floor((x - grid.range().lo) / grid.spacing()));
  lower = std::clamp(lower, 0, grid.levels() - 2);
  const double prob_upper = (x - grid.point(lower)) / grid.spacing();
  return {lower, lower + 1, std::clamp(prob_upper, 0.0, 1.0)};
}

DitherDraw dither_scalar(double x, const DitherGrid& grid, Rng& rng) {
  const DitherLaw law = dither_law(x, grid);
  if (law.lower == law.upper) return {grid.point(law.lower), law.lower};
  const int k = rng.next_double() < law.prob_upper ? law.upper : law.lower;
  return {grid.point(k), k};
}

VectorDitherDraw dither_vector(const Eigen::Ref<const Eigen::VectorXd>& v,
                               const DitherGrid& grid, Rng& rng) {
  VectorDitherDraw out;
  out.value.resize(v.size());
  out.indices.resize(static_cast<std::size_t>(v.size()));
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (!grid.contains(v[k]))
      throw std::domain_error("dither: coordinate " + std::to_string(k) +
                              " value " + std::to_string(v[k]) +
                              " outside grid range");
    const DitherDraw d = dither_scalar(v[k], grid, rng);
    out.value[k] = d.value;
    out.indices[static_cast<std::size_t>(k)] = d.index;
  }
  return out;
}

double norm_growth_bound(double norm_v, int d, double spacing, double delta) {
  if (norm_v < 0 || d <= 0 || spacing <= 0)
    throw std::invalid_argument("norm_growth_bound: nonpositive argument");
  if (!(delta > 0))
    throw std::invalid_argument("norm_growth_bound: delta must be positive");
  const double log_term = std::log(4.0 / delta);
  return norm_v * norm_v +
         std::sqrt(2.0) * norm_v * spacing * log_term +
         static_cast<double>(d) * spacing * spacing / 4.0 +
         std::sqrt(2.0 * d) * spacing * log_term;
}

double lp_norm(const Eigen::Ref<const Eigen::VectorXd>& v, double p) {
  if (p < 1.0) throw std::invalid_argument("lp_norm: order must be >= 1");
  if (p == 1.0) return v.lpNorm<1>();
  if (p == 2.0) return v.norm();
  double acc = 0.0;
  for (Eigen::Index k = 0; k < v.size(); ++k)
    acc += std::pow(std::abs(v[k]), p);
  return std::pow(acc, 1.0 / p);
}

namespace {

// Exact expectation of sum_k |Dither(y_k)|^p plus a Hoeffding tail at
// confidence 1-delta. Each |Dither(y_k)|^p is a two-valued independent
// variable, so the tail constant is sum of squared ranges.
double exact_expectation_bound(const Eigen::VectorXd& y, double p,
                               const DitherGrid& grid, double delta) {
  double expectation = 0.0;
  double sq_ranges = 0.0;
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    const DitherLaw law = dither_law(y[k], grid);
    const double lo_val = std::pow(std::abs(grid.point(law.lower)), p);
    const double hi_val = std::pow(std::abs(grid.point(law.upper)), p);
    expectation += (1.0 - law.prob_upper) * lo_val + law.prob_upper * hi_val;
    const double r = hi_val - lo_val;
    sq_ranges += r * r;
  }
  return expectation + std::sqrt(sq_ranges * std::log(1.0 / delta) / 2.0);
}

bool all_on_grid(const Eigen::Ref<const Eigen::VectorXd>& v,
                 const DitherGrid& grid) {
  for (Eigen::Index k = 0; k < v.size(); ++k)
    if (!grid.contains(v[k]) || !grid.snap_index(v[k])) return false;
  return true;
}

}  // namespace

bool norm_bound_certifies(const Eigen::Ref<const Eigen::VectorXd>& v,
                          double gamma, const DitherGrid& grid,
                          const NormPreservingConfig& cfg) {
  const Eigen::VectorXd y = gamma * v;
  const double p = cfg.norm_order;
  const double target = std::pow(cfg.norm_bound, p);
  if (p == 2.0) {
    // The closed-form bound is loose for large d (its tail term scales with
    // log(4/delta) rather than its square root); fall through to the exact
    // per-coordinate expectation when it cannot certify.
    const double lemma = norm_growth_bound(y.norm(), static_cast<int>(v.size()),
                                           grid.spacing(), cfg.confidence);
    if (lemma <= target) return true;
  }
  return exact_expectation_bound(y, p, grid, cfg.confidence) <= target;
}

NormPreservingDraw norm_preserving_dither(
    const Eigen::Ref<const Eigen::VectorXd>& v, const DitherGrid& grid,
    const NormPreservingConfig& cfg, Rng& rng) {
  if (!(cfg.confidence > 0 && cfg.confidence < 1))
    throw std::invalid_argument("norm_preserving_dither: confidence");
  if (cfg.max_attempts < 1)
    throw std::invalid_argument("norm_preserving_dither: max_attempts");
  if (!(cfg.search_tol > 0))
    throw std::invalid_argument("norm_preserving_dither: search_tol");
  const double input_norm = lp_norm(v, cfg.norm_order);
  if (input_norm > cfg.norm_bound * (1.0 + 1e-12))
    throw std::domain_error("norm_preserving_dither: ||v|| = " +
                            std::to_string(input_norm) + " exceeds bound " +
                            std::to_string(cfg.norm_bound));

  if (all_on_grid(v, grid)) {
    NormPreservingDraw out;
    out.value = v;
    out.indices.resize(static_cast<std::size_t>(v.size()));
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      const int idx = *grid.snap_index(v[k]);
      out.value[k] = grid.point(idx);
      out.indices[static_cast<std::size_t>(k)] = idx;
    }
    out.gamma = 1.0;
    out.attempts = 1;
    return out;
  }

  double gamma = 0.0;
  if (norm_bound_certifies(v, 1.0, grid, cfg)) {
    gamma = 1.0;
  } else if (norm_bound_certifies(v, 0.0, grid, cfg)) {
    double lo = 0.0, hi = 1.0;
    while (hi - lo > cfg.search_tol) {
      const double mid = 0.5 * (lo + hi);
      (norm_bound_certifies(v, mid, grid, cfg) ? lo : hi) = mid;
    }
    gamma = lo;
  }
  // gamma stays 0 when no scaling is certifiable; the rejection loop below
  // still enforces the norm bound on the actual draws.

  const Eigen::VectorXd y = gamma * v;
  double last_norm = 0.0;
  for (int attempt = 1; attempt <= cfg.max_attempts; ++attempt) {
    VectorDitherDraw draw = dither_vector(y, grid, rng);
    last_norm = lp_norm(draw.value, cfg.norm_order);
    if (last_norm <= cfg.norm_bound * (1.0 + 1e-12)) {
      return {std::move(draw.value), std::move(draw.indices), gamma, attempt};
    }
  }
  throw NormSamplingError(
      "norm_preserving_dither: no draw within the norm bound after " +
          std::to_string(cfg.max_attempts) + " attempts (last norm " +
          std::to_string(last_norm) + ")",
      last_norm);
}

}  // namespace mvu
