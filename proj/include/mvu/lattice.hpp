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

#ifndef MVU_LATTICE_HPP_
#define MVU_LATTICE_HPP_

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <vector>

#include "mvu/rng.hpp"

namespace mvu {

struct Interval {
  double lo;
  double hi;
};

// Uniform quantization lattice with B points spaced by (hi-lo)/(B-1).
// Immutable and shareable across threads.
class DitherGrid {
 public:
  DitherGrid(int levels, Interval range);

  // Grid over [0, 1], the scalar-mechanism domain.
  static DitherGrid unit(int levels) { return DitherGrid(levels, {0.0, 1.0}); }
  // Grid over [-bound, bound], the vector-mechanism domain before rescaling.
  static DitherGrid symmetric(int levels, double bound) {
    return DitherGrid(levels, {-bound, bound});
  }

  [[nodiscard]] int levels() const { return levels_; }
  [[nodiscard]] double spacing() const { return spacing_; }
  [[nodiscard]] Interval range() const { return range_; }
  [[nodiscard]] double point(int k) const {
    return k == levels_ - 1 ? range_.hi : range_.lo + k * spacing_;
  }
  [[nodiscard]] bool contains(double x) const;

  // Index of the grid point within kSnapTolerance of x, if any. Inputs that
  // close to a grid point are treated as exactly on-grid.
  [[nodiscard]] std::optional<int> snap_index(double x) const;

  static constexpr double kSnapTolerance = 1e-12;

 private:
  int levels_;
  Interval range_;
  double spacing_;
};

struct DitherDraw {
  double value;
  int index;
};

// Exact two-point law of the dithered rounding of x: the lower/upper
// bracketing indices and the probability of rounding up. On-grid inputs
// have lower == upper and prob_upper == 0.
struct DitherLaw {
  int lower;
  int upper;
  double prob_upper;
};

[[nodiscard]] DitherLaw dither_law(double x, const DitherGrid& grid);

// Unbiased randomized rounding of x onto the grid. On-grid inputs are
// returned deterministically without consuming randomness.
DitherDraw dither_scalar(double x, const DitherGrid& grid, Rng& rng);

struct VectorDitherDraw {
  Eigen::VectorXd value;
  std::vector<int> indices;
};

// Coordinate-wise dithering with independent randomness per coordinate.
VectorDitherDraw dither_vector(const Eigen::Ref<const Eigen::VectorXd>& v,
                               const DitherGrid& grid, Rng& rng);

struct NormPreservingConfig {
  double norm_bound;           // R
  double confidence;           // delta in (0, 1)
  int max_attempts = 1000;
  double search_tol = 1e-6;    // binary-search tolerance on gamma
  double norm_order = 2.0;     // p of the norm being preserved
};

struct NormPreservingDraw {
  Eigen::VectorXd value;
  std::vector<int> indices;
  double gamma;      // scaling applied to the input before dithering
  int attempts;      // rejection-sampling draws consumed
};

// Thrown when rejection sampling cannot produce a vector inside the norm
// ball within the configured attempt budget.
class NormSamplingError : public std::runtime_error {
 public:
  NormSamplingError(const std::string& what, double last_norm)
      : std::runtime_error(what), last_norm_(last_norm) {}
  [[nodiscard]] double last_norm() const { return last_norm_; }

 private:
  double last_norm_;
};

// High-probability upper bound on ||Dither(v)||_2^2 in terms of ||v||_2,
// the dimension, the grid spacing and the confidence delta:
//   ||v||^2 + sqrt(2)*||v||*spacing*log(4/delta)
//          + d*spacing^2/4 + sqrt(2d)*spacing*log(4/delta).
[[nodiscard]] double norm_growth_bound(double norm_v, int d, double spacing,
                                       double delta);

// Dithers gamma*v where gamma = sup{g in [0,1] : the analytic norm-growth
// bound certifies ||Dither(g*v)|| <= R with probability >= 1-delta}, found
// by binary search, then rejection-samples until the drawn vector actually
// satisfies the norm bound. The output is biased by the factor gamma and by
// the rejection; both are surfaced in the returned diagnostics rather than
// hidden.
NormPreservingDraw norm_preserving_dither(
    const Eigen::Ref<const Eigen::VectorXd>& v, const DitherGrid& grid,
    const NormPreservingConfig& cfg, Rng& rng);

// The feasibility test used by the binary search: an analytic bound b(gamma)
// with ||Dither(gamma*v)||_p <= b(gamma)^(1/p)-ish certification at
// confidence 1-delta. Exposed for tests.
[[nodiscard]] bool norm_bound_certifies(
    const Eigen::Ref<const Eigen::VectorXd>& v, double gamma,
    const DitherGrid& grid, const NormPreservingConfig& cfg);

[[nodiscard]] double lp_norm(const Eigen::Ref<const Eigen::VectorXd>& v,
                             double p);

}  // namespace mvu

#endif  // MVU_LATTICE_HPP_
