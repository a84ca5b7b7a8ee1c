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

#include "mvu/dme.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <thread>

#include "mvu/version.hpp"

namespace mvu {

namespace {

constexpr int kClientBlock = 4096;
constexpr double kInf = std::numeric_limits<double>::infinity();

int effective_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs fn(block_index, begin, end) over [0, total) in fixed-size blocks,
// possibly in parallel. Results must be written to per-block slots so the
// outcome does not depend on the thread count.
template <typename Fn>
void for_blocks(int total, int threads, Fn&& fn) {
  const int nblocks = (total + kClientBlock - 1) / kClientBlock;
  auto run_block = [&](int b) {
    const int lo = b * kClientBlock;
    const int hi = std::min(total, lo + kClientBlock);
    fn(b, lo, hi);
  };
  threads = std::min(threads, nblocks);
  if (threads <= 1) {
    for (int b = 0; b < nblocks; ++b) run_block(b);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int b = next.fetch_add(1); b < nblocks; b = next.fetch_add(1))
        run_block(b);
    });
  }
  for (auto& th : pool) th.join();
}

std::string mode_name(DmeMode mode) {
  switch (mode) {
    case DmeMode::kScalar: return "scalar";
    case DmeMode::kVectorL1: return "vector-l1";
    case DmeMode::kVectorL2: return "vector-l2";
  }
  return "?";
}

struct Built {
  std::optional<MechanismTable> table;
  double bits = kInf;
  double delta = 0.0;
  bool converged = true;
  std::string diagnostic;
};

Built build_mechanism(const DmeRun& run, double eps, std::size_t eps_index,
                      int b_in) {
  Built built;
  if (run.fixed_table) {
    built.table = *run.fixed_table;
    built.bits = built.table->b_out;
    return built;
  }
  const double resolved_delta =
      run.delta > 0 ? run.delta : 1.0 / (run.n + 1.0);
  if (run.mechanism == "laplace") {
    return built;
  }
  if (run.mechanism == "gaussian") {
    built.delta = resolved_delta;
    return built;
  }
  if (run.mechanism == "grr") {
    built.table = build_generalized_rr(eps, run.b_out);
  } else if (run.mechanism == "brr") {
    built.table = build_bitwise_rr(eps, run.b_out);
  } else if (run.mechanism == "mvu" || run.mechanism == "mvu-metric-l1") {
    SolverOptions opts = run.solver;
    opts.seed = Rng(run.seed)
                    .derive(0x6d767564u)  // design substream
                    .derive(eps_index)
                    .root_seed();
    // The metric mechanism is labeled by its pure-LDP composite guarantee:
    // a table at metric budget 2*eps applied coordinate-wise over the
    // halved-sensitivity ball is exactly eps-LDP, the same currency as the
    // Laplace label. Accounting-based (eps, delta) labels are available
    // through the accountant instead.
    DesignResult res =
        run.mechanism == "mvu"
            ? design_mvu(PrivacySpec::pure_ldp(eps), b_in, run.b_out, opts)
            : design_mvu(PrivacySpec::metric(2.0 * eps, 1.0), b_in,
                         run.b_out, opts);
    built.table = std::move(res.table);
    built.converged = res.converged;
    built.diagnostic = res.diagnostic;
  } else {
    throw std::invalid_argument("unknown mechanism: " + run.mechanism);
  }
  built.bits = built.table->b_out;
  return built;
}

void aggregate(DmeResult& result, double eps, int trials) {
  DmeAggregate agg;
  agg.epsilon = eps;
  agg.trials = trials;
  double sum = 0.0, sum2 = 0.0;
  int count = 0;
  for (const DmePoint& p : result.points) {
    if (p.epsilon != eps) continue;
    sum += p.mse;
    sum2 += p.mse * p.mse;
    ++count;
  }
  if (count > 0) agg.mean_mse = sum / count;
  agg.std_mse = count > 1
                    ? std::sqrt(std::max(0.0, (sum2 - sum * sum / count) /
                                                  (count - 1)))
                    : std::numeric_limits<double>::quiet_NaN();
  result.aggregates.push_back(agg);
}

nlohmann::json run_config(const DmeRun& run, int b_in) {
  nlohmann::json cfg = {
      {"tool", std::string("mvu ") + kVersionString},
      {"mode", mode_name(run.mode)},
      {"mechanism", run.mechanism},
      {"n", run.n},
      {"d", run.d},
      {"epsilons", run.epsilons},
      {"trials", run.trials},
      {"seed", run.seed},
      {"b_in", b_in},
      {"b_out", run.b_out},
      {"threads", effective_threads(run.threads)},
  };
  if (run.mode == DmeMode::kScalar) cfg["x"] = run.scalar_x;
  if (run.fixed_table) cfg["table"] = "fixed";
  return cfg;
}

}  // namespace

int resolve_input_bits(DmeMode mode, int d, int b_out) {
  if (mode == DmeMode::kScalar) return b_out;
  int needed;
  if (mode == DmeMode::kVectorL1) {
    needed = static_cast<int>(std::ceil(std::log2(4.0 * d + 1.0)));
  } else {
    needed = static_cast<int>(
        std::ceil(std::log2(1.0 + std::sqrt(d / 0.15))));
  }
  return std::clamp(std::max(needed, b_out), 1, 11);
}

Eigen::MatrixXd gen_l1_data(int n, int d, Rng& rng) {
  Eigen::MatrixXd data(n, d);
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int k = 0; k < d; ++k) {
      data(i, k) = rng.next_double();
      sum += data(i, k);
    }
    if (sum <= 0) {
      data.row(i).setZero();
      data(i, 0) = 1.0;
    } else {
      data.row(i) /= sum;
    }
  }
  return data;
}

Eigen::MatrixXd gen_l2_sector_data(int n, int d, Rng& rng) {
  Eigen::MatrixXd data(n, d);
  for (int i = 0; i < n; ++i) {
    double sq = 0.0;
    for (int k = 0; k < d; ++k) {
      data(i, k) = std::abs(rng.normal());
      sq += data(i, k) * data(i, k);
    }
    if (sq <= 0) {
      data.row(i).setZero();
      data(i, 0) = 1.0;
    } else {
      data.row(i) /= std::sqrt(sq);
    }
  }
  return data;
}

DmeResult run_scalar_dme(const DmeRun& run) {
  if (run.n < 1 || run.trials < 1)
    throw std::invalid_argument("dme: n and trials must be positive");
  if (!(run.scalar_x >= -1.0 && run.scalar_x <= 1.0))
    throw std::invalid_argument("dme: scalar x must lie in [-1, 1]");
  const int b_in = run.b_in > 0
                       ? run.b_in
                       : resolve_input_bits(DmeMode::kScalar, 1, run.b_out);
  DmeResult result;
  result.config = run_config(run, b_in);
  const int threads = effective_threads(run.threads);
  const Rng root(run.seed);
  const double x = run.scalar_x;
  const double u = (x + 1.0) / 2.0;  // table domain

  for (std::size_t e = 0; e < run.epsilons.size(); ++e) {
    const double eps = run.epsilons[e];
    const Built mech = build_mechanism(run, eps, e, b_in);
    const Rng eps_stream = root.derive(e);
    for (int trial = 0; trial < run.trials; ++trial) {
      const Rng trial_stream = eps_stream.derive(
          static_cast<std::uint64_t>(trial));
      const int nblocks = (run.n + kClientBlock - 1) / kClientBlock;
      std::vector<double> partial(static_cast<std::size_t>(nblocks), 0.0);
      for_blocks(run.n, threads, [&](int b, int lo, int hi) {
        double acc = 0.0;
        for (int k = lo; k < hi; ++k) {
          Rng client = trial_stream.derive(static_cast<std::uint64_t>(k));
          if (mech.table) {
            const int j = privatize_scalar(*mech.table, u, client);
            acc += decode(*mech.table, j);
          } else if (run.mechanism == "laplace") {
            acc += x + 2.0 / eps * client.laplace();
          } else {
            acc += x + gaussian_sigma(2.0, eps, mech.delta) * client.normal();
          }
        }
        partial[static_cast<std::size_t>(b)] = acc;
      });
      double sum = 0.0;
      for (double p : partial) sum += p;
      const double mean = sum / run.n;
      const double estimate = mech.table ? 2.0 * mean - 1.0 : mean;
      DmePoint point;
      point.epsilon = eps;
      point.delta = mech.delta;
      point.bits_per_coord = mech.bits;
      point.trial = trial;
      point.mse = (estimate - x) * (estimate - x);
      result.points.push_back(point);
    }
    aggregate(result, eps, run.trials);
  }
  return result;
}

DmeResult run_vector_dme(const DmeRun& run) {
  if (run.mode == DmeMode::kScalar)
    throw std::invalid_argument("run_vector_dme: scalar mode");
  if (run.n < 1 || run.trials < 1 || run.d < 1)
    throw std::invalid_argument("dme: n, d and trials must be positive");
  const bool l1 = run.mode == DmeMode::kVectorL1;
  if (!run.fixed_table && run.mechanism != "mvu-metric-l1" &&
      run.mechanism != "laplace" && run.mechanism != "gaussian")
    throw std::invalid_argument(
        "vector mode supports mvu-metric-l1, laplace, gaussian or a fixed "
        "metric table");
  const int b_in =
      run.b_in > 0 ? run.b_in : resolve_input_bits(run.mode, run.d, run.b_out);
  DmeResult result;
  result.config = run_config(run, b_in);
  const int threads = effective_threads(run.threads);
  const Rng root(run.seed);

  VectorSpec spec;
  spec.dimension = run.d;
  spec.norm_order = l1 ? 1.0 : 2.0;
  spec.sensitivity = 1.0;
  NormPreservingConfig npc;
  npc.norm_bound = 1.0;
  npc.confidence = 0.01;
  npc.max_attempts = 200;
  npc.search_tol = 1e-4;
  npc.norm_order = spec.norm_order;

  double gamma_sum = 0.0;
  double attempts_sum = 0.0;
  std::int64_t dither_count = 0;

  for (std::size_t e = 0; e < run.epsilons.size(); ++e) {
    const double eps = run.epsilons[e];
    const Built mech = build_mechanism(run, eps, e, b_in);
    if (mech.table && mech.table->privacy.kind != PrivacyKind::kMetric)
      throw std::invalid_argument("vector mode requires a metric table");
    const DitherGrid grid = mech.table
                                ? DitherGrid::symmetric(
                                      mech.table->input_levels(), 1.0)
                                : DitherGrid::symmetric(2, 1.0);
    const Rng eps_stream = root.derive(e);
    for (int trial = 0; trial < run.trials; ++trial) {
      // Data varies per trial but not per epsilon, so sweep curves compare
      // mechanisms on identical inputs.
      Rng data_rng = root.derive(0xda7au).derive(
          static_cast<std::uint64_t>(trial));
      const Eigen::MatrixXd data = l1 ? gen_l1_data(run.n, run.d, data_rng)
                                      : gen_l2_sector_data(run.n, run.d,
                                                           data_rng);
      const Eigen::VectorXd xbar = data.colwise().mean();
      const Rng trial_stream =
          eps_stream.derive(static_cast<std::uint64_t>(trial));
      const int nblocks = (run.n + kClientBlock - 1) / kClientBlock;
      Eigen::MatrixXd partial =
          Eigen::MatrixXd::Zero(run.d, nblocks);
      std::vector<double> partial_gamma(static_cast<std::size_t>(nblocks),
                                        0.0);
      std::vector<double> partial_attempts(static_cast<std::size_t>(nblocks),
                                           0.0);
      for_blocks(run.n, threads, [&](int b, int lo, int hi) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(run.d);
        double g = 0.0, at = 0.0;
        for (int k = lo; k < hi; ++k) {
          Rng client = trial_stream.derive(static_cast<std::uint64_t>(k));
          const Eigen::VectorXd v = data.row(k).transpose();
          if (mech.table) {
            const NormPreservingDraw nd =
                norm_preserving_dither(v, grid, npc, client);
            const Payload payload =
                privatize_vector(*mech.table, nd.value, spec, client);
            acc += decode_vector(*mech.table, payload, spec);
            g += nd.gamma;
            at += nd.attempts;
          } else if (run.mechanism == "laplace") {
            acc += laplace_mechanism(v, 1.0, eps, client);
          } else {
            acc += gaussian_mechanism(v, 1.0, eps, mech.delta, client);
          }
        }
        partial.col(b) = acc;
        partial_gamma[static_cast<std::size_t>(b)] = g;
        partial_attempts[static_cast<std::size_t>(b)] = at;
      });
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(run.d);
      for (int b = 0; b < nblocks; ++b) sum += partial.col(b);
      if (mech.table) {
        for (int b = 0; b < nblocks; ++b) {
          gamma_sum += partial_gamma[static_cast<std::size_t>(b)];
          attempts_sum += partial_attempts[static_cast<std::size_t>(b)];
        }
        dither_count += run.n;
      }
      const Eigen::VectorXd estimate = sum / run.n;
      DmePoint point;
      point.epsilon = eps;
      point.delta = mech.delta;
      point.bits_per_coord = mech.bits;
      point.trial = trial;
      point.mse = (estimate - xbar).squaredNorm() / run.d;
      result.points.push_back(point);
    }
    aggregate(result, eps, run.trials);
  }
  if (dither_count > 0) {
    result.config["norm_dither"] = {
        {"gamma_mean", gamma_sum / dither_count},
        {"attempts_mean", attempts_sum / dither_count},
        {"acceptance_rate", dither_count / attempts_sum},
    };
  }
  return result;
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_dme_csv(const std::filesystem::path& path, const DmeResult& res) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "# mvu " << kVersionString << "\n";
  out << "# config " << res.config.dump() << "\n";
  out << "# mse is the mean over coordinates of the squared estimate error\n";
  out << "mode,mechanism,epsilon,delta,bits_per_coord,trial,mse,stderr,"
         "seed\n";
  const std::string mode = res.config.at("mode").get<std::string>();
  const std::string mech = res.config.at("mechanism").get<std::string>();
  const auto seed = res.config.at("seed").get<std::uint64_t>();
  for (const DmePoint& p : res.points) {
    double stderr_val = std::numeric_limits<double>::quiet_NaN();
    for (const DmeAggregate& a : res.aggregates) {
      if (a.epsilon == p.epsilon && a.trials > 1)
        stderr_val = a.std_mse / std::sqrt(static_cast<double>(a.trials));
    }
    out << mode << ',' << mech << ',' << format_double(p.epsilon) << ','
        << format_double(p.delta) << ',' << format_double(p.bits_per_coord)
        << ',' << p.trial << ',' << format_double(p.mse) << ','
        << (std::isnan(stderr_val) ? std::string()
                                   : format_double(stderr_val))
        << ',' << seed << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

namespace {

MechanismTable pad_table_outputs(const MechanismTable& table, int b_out) {
  if (b_out <= table.b_out)
    throw std::invalid_argument("pad: target width not larger");
  MechanismTable padded = table;
  padded.b_out = b_out;
  const int old_cols = table.output_levels();
  const int new_cols = 1 << b_out;
  padded.P = Eigen::MatrixXd::Zero(table.input_levels(), new_cols);
  padded.P.leftCols(old_cols) = table.P;
  padded.A = Eigen::VectorXd::Constant(new_cols, table.A[old_cols - 1]);
  padded.A.head(old_cols) = table.A;
  padded.provenance["padded_from_b_out"] = table.b_out;
  return padded;
}

double simulate_table_mse(const MechanismTable& table, int sim_n,
                          const Rng& stream) {
  // Average over a fixed input sweep of the squared error of the
  // mean-of-decodes estimate.
  double total = 0.0;
  int points = 0;
  for (int g = 0; g <= 10; ++g) {
    const double u = g / 10.0;
    Rng rng = stream.derive(static_cast<std::uint64_t>(g));
    double acc = 0.0;
    for (int k = 0; k < sim_n; ++k) {
      const int j = privatize_scalar(table, u, rng);
      acc += decode(table, j);
    }
    const double err = acc / sim_n - u;
    total += err * err;
    ++points;
  }
  return total / points;
}

}  // namespace

BudgetSweepResult budget_sweep(std::span<const double> epsilons, int b_in,
                               std::span<const int> b_outs, int sim_n,
                               std::uint64_t seed,
                               const SolverOptions& opts) {
  if (epsilons.empty() || b_outs.empty())
    throw std::invalid_argument("budget_sweep: empty grids");
  std::vector<int> widths(b_outs.begin(), b_outs.end());
  std::sort(widths.begin(), widths.end());
  BudgetSweepResult result;
  result.config = {
      {"tool", std::string("mvu ") + kVersionString},
      {"b_in", b_in},
      {"b_outs", widths},
      {"epsilons", std::vector<double>(epsilons.begin(), epsilons.end())},
      {"sim_n", sim_n},
      {"seed", seed},
  };
  const Rng root(seed);
  for (std::size_t e = 0; e < epsilons.size(); ++e) {
    const double eps = epsilons[e];
    std::optional<MechanismTable> previous;
    double previous_objective = kInf;
    for (std::size_t w = 0; w < widths.size(); ++w) {
      SolverOptions cell_opts = opts;
      cell_opts.seed =
          root.derive(e * 100 + w).root_seed();
      DesignResult designed = design_mvu(PrivacySpec::pure_ldp(eps), b_in,
                                         widths[w], cell_opts);
      BudgetSweepCell cell;
      cell.epsilon = eps;
      cell.b_in = b_in;
      cell.b_out = widths[w];
      cell.converged = designed.converged;
      MechanismTable chosen = std::move(designed.table);
      double objective = designed.objective;
      if (previous && previous->b_out < widths[w] &&
          previous_objective < objective) {
        chosen = pad_table_outputs(*previous, widths[w]);
        objective = previous_objective;
        cell.padded = true;
        cell.converged = true;
      }
      cell.objective = objective;
      cell.mse = simulate_table_mse(chosen, sim_n,
                                    root.derive(0x5eedu + e * 100 + w));
      result.cells.push_back(cell);
      previous = std::move(chosen);
      previous_objective = objective;
    }
  }
  return result;
}

void write_sweep_csv(const std::filesystem::path& path,
                     const BudgetSweepResult& res) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "# mvu " << kVersionString << "\n";
  out << "# config " << res.config.dump() << "\n";
  out << "epsilon,b_in,b_out,objective,mse,converged,padded,seed\n";
  const auto seed = res.config.at("seed").get<std::uint64_t>();
  for (const BudgetSweepCell& c : res.cells) {
    out << format_double(c.epsilon) << ',' << c.b_in << ',' << c.b_out << ','
        << format_double(c.objective) << ',' << format_double(c.mse) << ','
        << (c.converged ? 1 : 0) << ',' << (c.padded ? 1 : 0) << ',' << seed
        << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace mvu
