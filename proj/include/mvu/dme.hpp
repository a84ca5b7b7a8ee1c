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

#ifndef MVU_DME_HPP_
#define MVU_DME_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mvu/designer.hpp"
#include "mvu/mechanisms.hpp"
#include "mvu/rng.hpp"
#include "mvu/tables.hpp"

namespace mvu {

enum class DmeMode { kScalar, kVectorL1, kVectorL2 };

// One simulated distributed-mean-estimation experiment: n clients privatize
// their value(s), the server averages the decoded responses, and the
// squared estimation error is recorded per trial.
struct DmeRun {
  DmeMode mode = DmeMode::kScalar;
  std::string mechanism = "mvu";  // mvu | mvu-metric-l1 | grr | brr |
                                  // laplace | gaussian
  int n = 100000;
  int d = 1;
  std::vector<double> epsilons = {1.0};
  int trials = 10;
  std::uint64_t seed = 0;
  int b_in = 0;   // 0: pick automatically (see resolve_input_bits)
  int b_out = 3;
  double scalar_x = 0.0;  // scalar mode: the fixed client value in [-1, 1]
  double delta = 0.0;     // 0: 1/(n+1) where a delta is needed
  int threads = 0;        // 0: hardware concurrency
  SolverOptions solver;
  std::optional<MechanismTable> fixed_table;  // bypasses design when set
};

struct DmePoint {
  double epsilon = 0.0;
  double delta = 0.0;
  double bits_per_coord = 0.0;  // +inf for uncompressed baselines
  int trial = 0;
  double mse = 0.0;
};

struct DmeAggregate {
  double epsilon = 0.0;
  double mean_mse = 0.0;
  double std_mse = 0.0;  // NaN when trials < 2
  int trials = 0;
};

struct DmeResult {
  std::vector<DmePoint> points;
  std::vector<DmeAggregate> aggregates;
  nlohmann::json config;  // resolved run configuration, echoed into the CSV
};

// Rows uniform from [0,1]^d, renormalized to unit L1 norm.
Eigen::MatrixXd gen_l1_data(int n, int d, Rng& rng);
// Rows uniform over the nonnegative sector of the unit sphere: absolute
// standard normals, normalized.
Eigen::MatrixXd gen_l2_sector_data(int n, int d, Rng& rng);

// Input quantization width used when DmeRun.b_in is 0: wide enough that
// coordinate-wise dithering keeps the expected norm of the dithered vector
// inside the unit ball with slack (L1 needs roughly 4d grid cells, L2 about
// sqrt(d/0.15)), never below b_out, capped at 11 bits.
int resolve_input_bits(DmeMode mode, int d, int b_out);

DmeResult run_scalar_dme(const DmeRun& run);
DmeResult run_vector_dme(const DmeRun& run);

// CSV with columns mode,mechanism,epsilon,delta,bits_per_coord,trial,mse,
// stderr,seed; configuration echoed in leading '#' comments. Byte-identical
// for identical runs.
void write_dme_csv(const std::filesystem::path& path, const DmeResult& res);

struct BudgetSweepCell {
  double epsilon = 0.0;
  int b_in = 0;
  int b_out = 0;
  double objective = 0.0;
  double mse = 0.0;
  bool converged = false;
  bool padded = false;  // the zero-padded smaller table beat the fresh design
};

struct BudgetSweepResult {
  std::vector<BudgetSweepCell> cells;
  nlohmann::json config;
};

// Designs a pure-LDP MVU table per (epsilon, b_out), keeping whichever of
// {fresh design, previous table padded with zero output columns} has the
// lower objective (the padded table is a feasible point of the larger
// problem, which is what makes the objective non-increasing in b_out), and
// measures simulated mean-estimation MSE per cell.
BudgetSweepResult budget_sweep(std::span<const double> epsilons, int b_in,
                               std::span<const int> b_outs, int sim_n,
                               std::uint64_t seed, const SolverOptions& opts);

void write_sweep_csv(const std::filesystem::path& path,
                     const BudgetSweepResult& res);

// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace mvu

#endif  // MVU_DME_HPP_
