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

#include "mvu/lattice.hpp"
#include "mvu/rng.hpp"

using namespace mvu;

TEST_CASE("dither law brackets and probabilities") {
  const DitherGrid g2 = DitherGrid::unit(2);
  // x = 0.25 on a two-point grid rounds up with probability 0.25.
  const DitherLaw law = dither_law(0.25, g2);
  CHECK(law.lower == 0);
  CHECK(law.upper == 1);
  CHECK(law.prob_upper == doctest::Approx(0.25).epsilon(1e-12));

  const DitherLaw half = dither_law(0.5, g2);
  CHECK(half.prob_upper == doctest::Approx(0.5).epsilon(1e-12));

  // Exact grid points are deterministic.
  const DitherGrid g8 = DitherGrid::unit(8);
  for (int k = 0; k < 8; ++k) {
    const DitherLaw on = dither_law(g8.point(k), g8);
    CHECK(on.lower == k);
    CHECK(on.upper == k);
  }
}

TEST_CASE("on-grid inputs do not consume randomness") {
  const DitherGrid g = DitherGrid::unit(4);
  Rng a(7), b(7);
  const DitherDraw d = dither_scalar(1.0 / 3.0, g, a);
  CHECK(d.index == 1);
  CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("inputs within snap tolerance are treated as on-grid") {
  const DitherGrid g = DitherGrid::unit(8);
  Rng rng(1);
  const double x = g.point(3) + 1e-13;
  for (int i = 0; i < 50; ++i)
    CHECK(dither_scalar(x, g, rng).index == 3);
}

TEST_CASE("out of range input throws") {
  const DitherGrid g = DitherGrid::unit(4);
  Rng rng(1);
  CHECK_THROWS_AS(dither_scalar(1.5, g, rng), std::domain_error);
  CHECK_THROWS_AS(dither_scalar(-0.1, g, rng), std::domain_error);
}

TEST_CASE("dither is unbiased with bounded variance across the range") {
  for (int B : {2, 4, 8}) {
    const DitherGrid g = DitherGrid::unit(B);
    const double spacing = g.spacing();
    for (int k = 0; k <= 100; ++k) {
      const double x = k / 100.0;
      const DitherLaw law = dither_law(x, g);
      const double mean = (1.0 - law.prob_upper) * g.point(law.lower) +
                          law.prob_upper * g.point(law.upper);
      CHECK(std::abs(mean - x) <= 1e-12);
      const double var = law.prob_upper * (1.0 - law.prob_upper) * spacing *
                         spacing;
      CHECK(var <= spacing * spacing / 4.0 + 1e-15);
    }
  }
}

TEST_CASE("empirical scalar law matches the analytic two-point law") {
  const DitherGrid g = DitherGrid::unit(2);
  Rng rng(11);
  const int n = 100000;
  int ups = 0;
  for (int i = 0; i < n; ++i) {
    const DitherDraw d = dither_scalar(0.25, g, rng);
    CHECK((d.index == 0 || d.index == 1));
    if (d.index == 1) ++ups;
  }
  const double se = std::sqrt(0.25 * 0.75 / n);
  CHECK(std::abs(ups / static_cast<double>(n) - 0.25) <= 4 * se);
}

TEST_CASE("vector dithering is the product of coordinate laws") {
  const DitherGrid g = DitherGrid::unit(2);
  Eigen::VectorXd v(2);
  v << 0.25, 0.75;
  // Outcome probabilities from the scalar law: (0,0):0.75*0.25 etc.
  const double expected[2][2] = {{0.75 * 0.25, 0.75 * 0.75},
                                 {0.25 * 0.25, 0.25 * 0.75}};
  Rng rng(17);
  const int n = 100000;
  int counts[2][2] = {{0, 0}, {0, 0}};
  for (int i = 0; i < n; ++i) {
    const VectorDitherDraw d = dither_vector(v, g, rng);
    counts[d.indices[0]][d.indices[1]]++;
  }
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const double p = expected[a][b];
      const double se = std::sqrt(p * (1 - p) / n);
      CHECK(std::abs(counts[a][b] / static_cast<double>(n) - p) <= 4 * se);
    }
}

TEST_CASE("vector dithering empirical mean is unbiased") {
  const DitherGrid g = DitherGrid::unit(8);
  Rng data_rng(5);
  Eigen::VectorXd v(6);
  for (int k = 0; k < 6; ++k) v[k] = data_rng.next_double();
  Rng rng(29);
  const int n = 100000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(6);
  for (int i = 0; i < n; ++i) sum += dither_vector(v, g, rng).value;
  const double se = g.spacing() / 2.0 / std::sqrt(static_cast<double>(n));
  for (int k = 0; k < 6; ++k)
    CHECK(std::abs(sum[k] / n - v[k]) <= 3 * se + 1e-12);
}

TEST_CASE("vector dithering reports the offending coordinate") {
  const DitherGrid g = DitherGrid::unit(4);
  Eigen::VectorXd v(3);
  v << 0.5, 2.0, 0.1;
  Rng rng(3);
  CHECK_THROWS_WITH_AS(dither_vector(v, g, rng),
                       doctest::Contains("coordinate 1"), std::domain_error);
}

TEST_CASE("norm growth bound closed form") {
  // ||v||=1, d=4, spacing=1, delta=4/e makes log(4/delta)=1:
  // 1 + sqrt(2) + 1 + 2*sqrt(2) = 2 + 3*sqrt(2).
  const double v = norm_growth_bound(1.0, 4, 1.0, 4.0 / std::exp(1.0));
  CHECK(v == doctest::Approx(2.0 + 3.0 * std::sqrt(2.0)).epsilon(1e-12));

  // Vanishing spacing: the bound collapses to ||v||^2.
  CHECK(norm_growth_bound(1.0, 4, 1e-13, 0.1) ==
        doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS_AS(static_cast<void>(norm_growth_bound(1.0, 0, 1.0, 0.1)), std::invalid_argument);
  CHECK_THROWS_AS(static_cast<void>(norm_growth_bound(1.0, 4, 1.0, -0.5)),
                  std::invalid_argument);
}

TEST_CASE("norm growth bound holds at the 1-delta quantile") {
  const int d = 64;
  const int B = 16;
  const double delta = 0.1;
  const DitherGrid g = DitherGrid::symmetric(B, 1.0);
  Rng rng(41);
  Eigen::VectorXd v(d);
  for (int k = 0; k < d; ++k) v[k] = rng.normal();
  v /= v.norm();  // unit L2 norm, coordinates within [-1, 1]
  const double bound = norm_growth_bound(1.0, d, g.spacing(), delta);
  const int n = 20000;
  std::vector<double> sq(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    sq[static_cast<std::size_t>(i)] =
        dither_vector(v, g, rng).value.squaredNorm();
  std::sort(sq.begin(), sq.end());
  const double quantile = sq[static_cast<std::size_t>(n * (1.0 - delta))];
  CHECK(quantile <= bound);
}

TEST_CASE("norm preserving dither short-circuits for on-grid vectors") {
  const DitherGrid g = DitherGrid::unit(5);
  NormPreservingConfig cfg;
  cfg.norm_bound = 2.0;
  cfg.confidence = 0.05;
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(4);
  Rng rng(9);
  const NormPreservingDraw z = norm_preserving_dither(zero, g, cfg, rng);
  CHECK(z.gamma == 1.0);
  CHECK(z.attempts == 1);
  CHECK(z.value.norm() == 0.0);

  Eigen::VectorXd v(3);
  v << 0.25, 0.5, 1.0;  // all grid points of the 5-level unit grid
  const NormPreservingDraw w = norm_preserving_dither(v, g, cfg, rng);
  CHECK(w.gamma == 1.0);
  CHECK(w.attempts == 1);
  CHECK((w.value - v).norm() == 0.0);
}

TEST_CASE("norm preserving dither keeps draws inside the ball") {
  const int d = 128;
  const DitherGrid g = DitherGrid::symmetric(32, 1.0);
  NormPreservingConfig cfg;
  cfg.norm_bound = 1.0;
  cfg.confidence = 0.01;
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::VectorXd v(d);
    for (int k = 0; k < d; ++k) v[k] = rng.normal();
    v /= v.norm();
    const NormPreservingDraw out = norm_preserving_dither(v, g, cfg, rng);
    CHECK(out.value.norm() <= 1.0 + 1e-12);
    CHECK(out.gamma >= 0.0);
    CHECK(out.gamma <= 1.0);
  }
}

TEST_CASE("norm preserving dither reports unattainable bounds") {
  // Two-point grid {-1, 1}: every dithered coordinate has magnitude 1, so
  // the L2 norm of any draw is sqrt(2) and a 0.5 ball is unreachable.
  const DitherGrid g = DitherGrid::symmetric(2, 1.0);
  NormPreservingConfig cfg;
  cfg.norm_bound = 0.5;
  cfg.confidence = 0.1;
  cfg.max_attempts = 8;
  Eigen::VectorXd v(2);
  v << 0.1, -0.1;
  Rng rng(13);
  try {
    norm_preserving_dither(v, g, cfg, rng);
    FAIL("expected NormSamplingError");
  } catch (const NormSamplingError& e) {
    CHECK(e.last_norm() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("norm preserving dither rejects vectors outside the ball") {
  const DitherGrid g = DitherGrid::symmetric(8, 1.0);
  NormPreservingConfig cfg;
  cfg.norm_bound = 0.5;
  cfg.confidence = 0.1;
  Eigen::VectorXd v(4);
  v << 0.5, 0.5, 0.5, 0.5;
  Rng rng(1);
  CHECK_THROWS_AS(norm_preserving_dither(v, g, cfg, rng), std::domain_error);
}

TEST_CASE("lp norms") {
  Eigen::VectorXd v(3);
  v << -3.0, 4.0, 0.0;
  CHECK(lp_norm(v, 1.0) == doctest::Approx(7.0));
  CHECK(lp_norm(v, 2.0) == doctest::Approx(5.0));
  CHECK(lp_norm(v, 3.0) == doctest::Approx(std::pow(91.0, 1.0 / 3.0)));
  CHECK_THROWS_AS(static_cast<void>(lp_norm(v, 0.5)), std::invalid_argument);
}
