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

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "mvu/accountant.hpp"
#include "mvu/designer.hpp"
#include "mvu/dme.hpp"
#include "mvu/mechanisms.hpp"
#include "mvu/tables.hpp"
#include "mvu/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNotConverged = 3;

bool g_quiet = false;

void info(const std::string& line) {
  if (!g_quiet) std::cout << line << "\n";
}

// Rows of comma- or whitespace-separated numbers; '#' starts a comment.
Eigen::MatrixXd read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    for (char& c : line)
      if (c == ',' || c == ';' || c == '\t') c = ' ';
    std::istringstream ss(line);
    std::vector<double> row;
    double v;
    while (ss >> v) row.push_back(v);
    if (row.empty()) continue;
    if (!rows.empty() && rows.back().size() != row.size())
      throw std::invalid_argument(path + ": ragged rows in input");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument(path + ": no data rows");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
  return out;
}

struct DesignArgs {
  std::string mechanism = "mvu";
  double epsilon = 1.0;
  int b_in = 3;
  int b_out = 3;
  double metric_p = 1.0;
  std::string method = "hard";
  std::string init = "dither-then-grr";
  int restarts = 2;
  std::uint64_t seed = 0;
  std::string out;
};

int run_design(const DesignArgs& a) {
  mvu::MechanismTable table;
  bool converged = true;
  std::string diagnostic;
  double objective = 0.0;
  if (a.mechanism == "brr") {
    table = mvu::build_bitwise_rr(a.epsilon, a.b_out);
    objective = table.variance_objective();
  } else if (a.mechanism == "grr") {
    table = mvu::build_generalized_rr(a.epsilon, a.b_out);
    objective = table.variance_objective();
  } else if (a.mechanism == "mvu" || a.mechanism == "mvu-metric") {
    mvu::SolverOptions opts;
    opts.method = a.method == "penalty" ? mvu::DesignMethod::kPenalty
                                        : mvu::DesignMethod::kHard;
    opts.init = a.init == "uniform" ? mvu::DesignInit::kUniform
                                    : mvu::DesignInit::kDitherThenGrr;
    opts.restarts = a.restarts;
    opts.seed = a.seed;
    const mvu::PrivacySpec spec =
        a.mechanism == "mvu"
            ? mvu::PrivacySpec::pure_ldp(a.epsilon)
            : mvu::PrivacySpec::metric(a.epsilon, a.metric_p);
    mvu::DesignResult res = mvu::design_mvu(spec, a.b_in, a.b_out, opts);
    table = std::move(res.table);
    converged = res.converged;
    diagnostic = res.diagnostic;
    objective = res.objective;
  } else {
    throw std::invalid_argument("unknown mechanism " + a.mechanism);
  }
  table.provenance["cli"] = {
      {"tool", std::string("mvu ") + mvu::kVersionString},
      {"command", "design"},
      {"mechanism", a.mechanism},
      {"epsilon", a.epsilon},
      {"b_in", a.b_in},
      {"b_out", a.b_out},
      {"metric_p", a.metric_p},
      {"method", a.method},
      {"init", a.init},
      {"restarts", a.restarts},
      {"seed", a.seed},
      {"converged", converged},
  };
  mvu::save_table(table, a.out);
  const mvu::FeasibilityReport report = mvu::check_feasibility(table);
  info("wrote " + a.out);
  info("objective " + mvu::format_double(objective) + ", realized epsilon " +
       mvu::format_double(report.realized_epsilon) + ", feasible " +
       (report.feasible ? "yes" : "no") + ", converged " +
       (converged ? "yes" : "no"));
  if (!converged) {
    info("diagnostic: " + diagnostic);
    return kExitNotConverged;
  }
  return kExitOk;
}

struct CheckArgs {
  std::string table;
  double tol_dp = -1.0;
  double tol_bias = -1.0;
};

int run_check(const CheckArgs& a) {
  mvu::TableFile file = mvu::load_table(a.table, /*strict_feasibility=*/false);
  mvu::Tolerances tol = file.table.declared_tol;
  if (a.tol_dp >= 0) tol.dp_log_ratio = a.tol_dp;
  if (a.tol_bias >= 0) tol.bias = a.tol_bias;
  const mvu::FeasibilityReport report =
      mvu::check_feasibility(file.table, tol);
  info("row-sum deviation  " + mvu::format_double(report.max_row_sum_dev));
  info("min entry          " + mvu::format_double(report.min_entry));
  info("dp violation       " + mvu::format_double(report.max_dp_violation));
  info("bias residual      " + mvu::format_double(report.max_bias));
  info("realized epsilon   " + mvu::format_double(report.realized_epsilon));
  info(std::string("feasible           ") + (report.feasible ? "yes" : "no"));
  return report.feasible ? kExitOk : kExitValidation;
}

struct PrivatizeArgs {
  std::string table;
  std::string input;
  double norm_order = 0.0;  // 0: table metric order (or 1)
  double sensitivity = 1.0;
  bool norm_preserve = false;
  double confidence = 0.01;
  std::uint64_t seed = 0;
  std::string out;
};

int run_privatize(const PrivatizeArgs& a) {
  const mvu::TableFile file = mvu::load_table(a.table);
  const mvu::MechanismTable& table = file.table;
  const Eigen::MatrixXd data = read_csv_matrix(a.input);
  const int d = static_cast<int>(data.cols());
  const double p =
      a.norm_order > 0
          ? a.norm_order
          : (table.privacy.kind == mvu::PrivacyKind::kMetric
                 ? table.privacy.metric_order
                 : 1.0);

  mvu::PayloadFile out_file;
  out_file.dimension = d;
  out_file.bits_per_index = table.b_out;
  out_file.metadata = {
      {"tool", std::string("mvu ") + mvu::kVersionString},
      {"command", "privatize"},
      {"table", a.table},
      {"p", p},
      {"sensitivity", a.sensitivity},
      {"norm_preserve", a.norm_preserve},
      {"seed", a.seed},
      {"count", data.rows()},
  };
  const mvu::Rng root(a.seed);

  if (table.privacy.kind == mvu::PrivacyKind::kPureLdp) {
    if (d != 1)
      throw std::invalid_argument(
          "pure-LDP tables privatize scalars; input must have one column");
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      mvu::Rng client = root.derive(static_cast<std::uint64_t>(i));
      const double x = data(i, 0);
      if (std::abs(x) > a.sensitivity * (1.0 + 1e-12))
        throw std::domain_error("row " + std::to_string(i) +
                                ": |x| exceeds sensitivity");
      const double u = (x + a.sensitivity) / (2.0 * a.sensitivity);
      out_file.records.push_back({static_cast<std::uint16_t>(
          mvu::privatize_scalar(table, u, client))});
    }
  } else {
    mvu::VectorSpec spec;
    spec.dimension = d;
    spec.norm_order = p;
    spec.sensitivity = a.sensitivity;
    const mvu::DitherGrid grid =
        mvu::DitherGrid::symmetric(table.input_levels(), a.sensitivity);
    mvu::NormPreservingConfig npc;
    npc.norm_bound = a.sensitivity;
    npc.confidence = a.confidence;
    npc.norm_order = p;
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      mvu::Rng client = root.derive(static_cast<std::uint64_t>(i));
      Eigen::VectorXd v = data.row(i).transpose();
      if (a.norm_preserve)
        v = mvu::norm_preserving_dither(v, grid, npc, client).value;
      const mvu::Payload payload =
          mvu::privatize_vector(table, v, spec, client);
      out_file.records.push_back(payload.indices);
    }
  }
  mvu::write_payload_file(a.out, out_file);
  info("wrote " + a.out + " (" + std::to_string(out_file.records.size()) +
       " records, " + std::to_string(d * table.b_out) + " bits each)");
  return kExitOk;
}

struct AccountArgs {
  std::string table;
  double metric_p = 0.0;  // 0: table metric order (or 1)
  double sensitivity = 0.5;
  int dimension = 1;
  int steps = 1;
  double delta = 1e-5;
  std::string method = "lp";
  std::vector<double> alphas;
  std::string out;
};

int run_account(const AccountArgs& a) {
  const mvu::TableFile file = mvu::load_table(a.table);
  const mvu::MechanismTable& table = file.table;
  const double p = a.metric_p > 0
                       ? a.metric_p
                       : (table.privacy.kind == mvu::PrivacyKind::kMetric
                              ? table.privacy.metric_order
                              : 1.0);
  mvu::AccountMethod method = mvu::AccountMethod::kLp;
  if (a.method == "greedy") method = mvu::AccountMethod::kGreedy;
  else if (a.method == "exact") method = mvu::AccountMethod::kExact;
  else if (a.method != "lp")
    throw std::invalid_argument("method must be greedy, lp or exact");
  const std::vector<double> orders =
      a.alphas.empty() ? mvu::default_alpha_grid() : a.alphas;
  const mvu::AccountLedger ledger =
      mvu::account(table, p, a.sensitivity, a.dimension, a.steps, a.delta,
                   method, orders);
  nlohmann::json doc = {
      {"format", "mvu-ledger"},
      {"version", 1},
      {"config",
       {{"tool", std::string("mvu ") + mvu::kVersionString},
        {"table", a.table},
        {"metric_p", p},
        {"sensitivity", a.sensitivity},
        {"d", a.dimension},
        {"steps", a.steps},
        {"delta", a.delta},
        {"method", a.method}}},
      {"budget", ledger.profile.budget},
      {"orders", ledger.profile.orders},
      {"per_step_eps", ledger.profile.per_step_eps},
      {"composed_eps", ledger.composed_eps},
      {"final_epsilon", ledger.final_epsilon},
      {"alpha_star", ledger.alpha_star},
  };
  std::ofstream out(a.out);
  if (!out) throw std::runtime_error("cannot open " + a.out);
  out << doc.dump(2) << "\n";
  info("wrote " + a.out);
  info("final epsilon " + mvu::format_double(ledger.final_epsilon) +
       " at alpha " + mvu::format_double(ledger.alpha_star) + " (delta " +
       mvu::format_double(a.delta) + ", " + std::to_string(a.steps) +
       " steps)");
  return kExitOk;
}

struct SimArgs {
  std::string mode = "scalar";
  std::string mechanism = "mvu";
  std::string table;
  int n = 100000;
  int d = 1;
  std::vector<double> epsilons = {1.0};
  int trials = 10;
  std::uint64_t seed = 0;
  int b_in = 0;
  int b_out = 3;
  double x = 0.0;
  double delta = 0.0;
  int threads = 0;
  std::string out;
};

int run_simulate(const SimArgs& a) {
  mvu::DmeRun run;
  if (a.mode == "scalar") run.mode = mvu::DmeMode::kScalar;
  else if (a.mode == "vector-l1") run.mode = mvu::DmeMode::kVectorL1;
  else if (a.mode == "vector-l2") run.mode = mvu::DmeMode::kVectorL2;
  else throw std::invalid_argument("mode must be scalar, vector-l1 or vector-l2");
  run.mechanism = a.mechanism;
  run.n = a.n;
  run.d = a.d;
  run.epsilons = a.epsilons;
  run.trials = a.trials;
  run.seed = a.seed;
  run.b_in = a.b_in;
  run.b_out = a.b_out;
  run.scalar_x = a.x;
  run.delta = a.delta;
  run.threads = a.threads;
  if (!a.table.empty()) {
    mvu::TableFile file = mvu::load_table(a.table);
    run.fixed_table = std::move(file.table);
    run.mechanism = run.fixed_table->provenance.contains("mechanism")
                        ? run.fixed_table->provenance["mechanism"]
                              .get<std::string>()
                        : "table";
    run.epsilons = {run.fixed_table->privacy.epsilon};
    run.b_out = run.fixed_table->b_out;
  }
  const mvu::DmeResult result = run.mode == mvu::DmeMode::kScalar
                                    ? mvu::run_scalar_dme(run)
                                    : mvu::run_vector_dme(run);
  mvu::write_dme_csv(a.out, result);
  info("wrote " + a.out);
  for (const mvu::DmeAggregate& agg : result.aggregates)
    info("epsilon " + mvu::format_double(agg.epsilon) + ": mse " +
         mvu::format_double(agg.mean_mse) +
         (agg.trials > 1 ? " (std " + mvu::format_double(agg.std_mse) + ")"
                         : ""));
  return kExitOk;
}

struct SweepArgs {
  std::vector<double> epsilons = {0.5, 5.0};
  int b_in = 5;
  std::vector<int> b_outs = {1, 2, 3, 4, 5};
  int sim_n = 20000;
  std::uint64_t seed = 0;
  int restarts = 0;
  std::string method = "hard";
  std::string out;
};

int run_sweep(const SweepArgs& a) {
  mvu::SolverOptions opts;
  opts.restarts = a.restarts;
  opts.method = a.method == "penalty" ? mvu::DesignMethod::kPenalty
                                      : mvu::DesignMethod::kHard;
  const mvu::BudgetSweepResult result =
      mvu::budget_sweep(a.epsilons, a.b_in, a.b_outs, a.sim_n, a.seed, opts);
  mvu::write_sweep_csv(a.out, result);
  info("wrote " + a.out);
  for (const mvu::BudgetSweepCell& c : result.cells)
    info("eps " + mvu::format_double(c.epsilon) + " b_out " +
         std::to_string(c.b_out) + ": objective " +
         mvu::format_double(c.objective) + ", mse " +
         mvu::format_double(c.mse) + (c.padded ? " (padded)" : ""));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Minimum-variance unbiased privatization tables: design, "
               "validation, online privatization, RDP accounting and "
               "mean-estimation simulation"};
  app.set_version_flag("--version", std::string("mvu ") + mvu::kVersionString);
  app.add_flag("--quiet", g_quiet, "suppress progress output");
  app.require_subcommand(1);

  DesignArgs design;
  auto* cmd_design = app.add_subcommand(
      "design", "build a mechanism table and write it as JSON");
  cmd_design->add_option("--mechanism", design.mechanism,
                         "mvu | mvu-metric | brr | grr")
      ->check(CLI::IsMember({"mvu", "mvu-metric", "brr", "grr"}));
  cmd_design->add_option("--epsilon", design.epsilon, "privacy budget (nats)")
      ->required();
  cmd_design->add_option("--bin", design.b_in, "input bit-width");
  cmd_design->add_option("--bout", design.b_out, "output bit-width")
      ->required();
  cmd_design->add_option("--metric-p", design.metric_p,
                         "metric order for mvu-metric");
  cmd_design->add_option("--method", design.method, "hard | penalty")
      ->check(CLI::IsMember({"hard", "penalty"}));
  cmd_design->add_option("--init", design.init,
                         "dither-then-grr | uniform")
      ->check(CLI::IsMember({"dither-then-grr", "uniform"}));
  cmd_design->add_option("--restarts", design.restarts, "random restarts");
  cmd_design->add_option("--seed", design.seed, "solver seed");
  cmd_design->add_option("--out", design.out, "output table path")
      ->required();

  CheckArgs check;
  auto* cmd_check =
      app.add_subcommand("check", "validate a table against its constraints");
  cmd_check->add_option("table", check.table, "table JSON path")->required();
  cmd_check->add_option("--tol-dp", check.tol_dp,
                        "override DP log-ratio tolerance");
  cmd_check->add_option("--tol-bias", check.tol_bias,
                        "override bias tolerance");

  PrivatizeArgs priv;
  auto* cmd_priv = app.add_subcommand(
      "privatize", "privatize CSV rows into a binary payload file");
  cmd_priv->add_option("--table", priv.table, "table JSON path")->required();
  cmd_priv->add_option("--input", priv.input, "input CSV path")->required();
  cmd_priv->add_option("--p", priv.norm_order, "norm order of the data ball");
  cmd_priv->add_option("--sensitivity", priv.sensitivity,
                       "radius of the data ball");
  cmd_priv->add_flag("--norm-preserve", priv.norm_preserve,
                     "norm-preserving dithering before privatization");
  cmd_priv->add_option("--confidence", priv.confidence,
                       "norm-preserve tail probability delta");
  cmd_priv->add_option("--seed", priv.seed, "randomness seed");
  cmd_priv->add_option("--out", priv.out, "output payload path")->required();

  AccountArgs acct;
  auto* cmd_acct = app.add_subcommand(
      "account", "Renyi-DP accounting for repeated vector applications");
  cmd_acct->add_option("--table", acct.table, "table JSON path")->required();
  cmd_acct->add_option("--metric-p", acct.metric_p, "cost exponent p");
  cmd_acct->add_option("--sensitivity", acct.sensitivity,
                       "post-scaling sensitivity (default 0.5)");
  cmd_acct->add_option("--d", acct.dimension, "vector dimension");
  cmd_acct->add_option("--steps", acct.steps, "composition steps")
      ->required();
  cmd_acct->add_option("--delta", acct.delta, "target delta")->required();
  cmd_acct->add_option("--method", acct.method, "greedy | lp | exact")
      ->check(CLI::IsMember({"greedy", "lp", "exact"}));
  cmd_acct->add_option("--alphas", acct.alphas,
                       "Renyi orders (default 1.25,1.5,2..64)")
      ->delimiter(',');
  cmd_acct->add_option("--out", acct.out, "output ledger path")->required();

  SimArgs sim;
  auto* cmd_sim = app.add_subcommand(
      "simulate-dme", "distributed mean estimation simulation");
  cmd_sim->add_option("--mode", sim.mode, "scalar | vector-l1 | vector-l2")
      ->required();
  cmd_sim->add_option("--mechanism", sim.mechanism,
                      "mvu | mvu-metric-l1 | grr | brr | laplace | gaussian");
  cmd_sim->add_option("--table", sim.table,
                      "fixed table JSON (overrides --mechanism)");
  cmd_sim->add_option("--n", sim.n, "clients per trial");
  cmd_sim->add_option("--d", sim.d, "vector dimension");
  cmd_sim->add_option("--epsilons", sim.epsilons, "epsilon grid")
      ->delimiter(',');
  cmd_sim->add_option("--trials", sim.trials, "repeated runs");
  cmd_sim->add_option("--seed", sim.seed, "simulation seed");
  cmd_sim->add_option("--bin", sim.b_in, "input bit-width (0 = auto)");
  cmd_sim->add_option("--bout", sim.b_out, "output bit-width");
  cmd_sim->add_option("--x", sim.x, "scalar-mode input in [-1, 1]");
  cmd_sim->add_option("--delta", sim.delta, "delta for (eps,delta) baselines");
  cmd_sim->add_option("--threads", sim.threads, "worker threads (0 = cores)");
  cmd_sim->add_option("--out", sim.out, "output CSV path")->required();

  SweepArgs sweep;
  auto* cmd_sweep = app.add_subcommand(
      "budget-sweep", "design objective and MSE across output budgets");
  cmd_sweep->add_option("--epsilons", sweep.epsilons, "epsilon grid")
      ->delimiter(',');
  cmd_sweep->add_option("--bin", sweep.b_in, "fixed input bit-width");
  cmd_sweep->add_option("--bouts", sweep.b_outs, "output bit-widths")
      ->delimiter(',');
  cmd_sweep->add_option("--sim-n", sweep.sim_n, "clients per simulated cell");
  cmd_sweep->add_option("--seed", sweep.seed, "seed");
  cmd_sweep->add_option("--restarts", sweep.restarts, "design restarts");
  cmd_sweep->add_option("--method", sweep.method, "hard | penalty")
      ->check(CLI::IsMember({"hard", "penalty"}));
  cmd_sweep->add_option("--out", sweep.out, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (cmd_design->parsed()) return run_design(design);
    if (cmd_check->parsed()) return run_check(check);
    if (cmd_priv->parsed()) return run_privatize(priv);
    if (cmd_acct->parsed()) return run_account(acct);
    if (cmd_sim->parsed()) return run_simulate(sim);
    if (cmd_sweep->parsed()) return run_sweep(sweep);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}
