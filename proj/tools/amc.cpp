// Command-line front end: generate synthetic low-rank matrices, run active
// completion against a known truth, sweep experiments, and evaluate estimates.

#include "amc/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

int cmd_generate(int rows, int cols, int rank, double noise, std::uint64_t seed,
                 const std::string& out) {
  const amc::Matrix truth = amc::generate_low_rank(rows, cols, rank, noise, seed);
  amc::save_dense(out, truth);
  return 0;
}

int cmd_complete(const std::string& obs_path, const std::string& truth_path,
                 int rank, double theta, long budget, std::uint64_t seed,
                 const std::string& out, const std::string& query_log) {
  const amc::ObservedMatrix obs = amc::load_observed(obs_path);
  const amc::Matrix truth = amc::load_dense(truth_path);
  if (truth.rows() != obs.n_rows() || truth.cols() != obs.n_cols())
    throw std::invalid_argument("complete: truth and observation shapes differ");

  amc::GroundTruthOracle oracle(truth, budget);
  amc::CompletionOptions opts;
  opts.theta = theta;
  opts.seed = seed;
  const amc::CompletionReport report =
      amc::order_and_extend(obs, rank, oracle, opts);

  amc::save_dense(out, report.estimate);
  if (!query_log.empty()) amc::save_query_log(query_log, report.queries);
  std::cout << "queries_used " << report.queries_used << '\n'
            << "recovered_fraction "
            << amc::format_double(report.recovered_fraction()) << '\n';
  return 0;
}

int cmd_experiment(const std::string& truth_path, const amc::ExperimentConfig& cfg,
                   const std::string& out) {
  const amc::Matrix truth = amc::load_dense(truth_path);
  const amc::ExperimentResult result = amc::run_experiment(truth, cfg);
  amc::write_experiment_csv(out, result.rows);
  std::cout << "phi " << result.phi << '\n'
            << "m0 " << result.m0 << '\n'
            << "critical_gap " << result.critical_gap << '\n';
  return 0;
}

int cmd_eval(const std::string& truth_path, const std::string& est_path) {
  const amc::Matrix truth = amc::load_dense(truth_path);
  const amc::Matrix est = amc::load_dense(est_path);
  long recovered = 0;
  for (Eigen::Index i = 0; i < est.rows(); ++i)
    for (Eigen::Index j = 0; j < est.cols(); ++j)
      if (est(i, j) != 0.0) ++recovered;
  const double fraction =
      static_cast<double>(recovered) / static_cast<double>(est.size());
  std::cout << "rel_error " << amc::format_double(amc::rel_error(truth, est))
            << '\n'
            << "recovered_fraction " << amc::format_double(fraction) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active low-rank matrix completion with budgeted queries"};
  app.require_subcommand(1);

  // generate
  int rows = 0, cols = 0, rank = 0;
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::string out;
  auto* gen = app.add_subcommand("generate", "Write a synthetic low-rank truth matrix");
  gen->add_option("--rows", rows)->required();
  gen->add_option("--cols", cols)->required();
  gen->add_option("--rank", rank)->required();
  gen->add_option("--noise", noise, "Relative noise scale (0 = exact rank)");
  gen->add_option("--seed", seed);
  gen->add_option("--out", out)->required();

  // complete
  std::string obs_path, truth_path, query_log;
  double theta = 1.0;
  long budget = 0;
  auto* comp = app.add_subcommand("complete", "Complete an observed matrix with oracle queries");
  comp->add_option("--obs", obs_path, "Sparse coordinate file")->required();
  comp->add_option("--truth", truth_path, "Dense CSV backing the oracle")->required();
  comp->add_option("--rank", rank)->required();
  comp->add_option("--theta", theta, "Stability threshold");
  comp->add_option("--budget", budget)->required();
  comp->add_option("--seed", seed, "Surrogate sampling seed");
  comp->add_option("--out", out, "Dense CSV estimate")->required();
  comp->add_option("--query-log", query_log, "Optional query log CSV");

  // experiment
  amc::ExperimentConfig cfg;
  bool no_timing = false;
  auto* exp = app.add_subcommand("experiment", "Sweep budgets, seeds and algorithms");
  exp->add_option("--truth", truth_path)->required();
  exp->add_option("--rank", cfg.rank)->required();
  exp->add_option("--theta", cfg.theta);
  exp->add_option("--mask-frac", cfg.initial_mask_fraction,
                  "Initial mask size as a fraction of the critical size");
  exp->add_option("--budgets", cfg.budgets, "Comma-separated budgets")
      ->required()
      ->delimiter(',');
  exp->add_option("--seeds", cfg.seeds, "Comma-separated seeds")
      ->required()
      ->delimiter(',');
  exp->add_option("--algos", cfg.algorithms,
                  "Subset of order_extend,random_baseline,sequential")
      ->required()
      ->delimiter(',');
  exp->add_flag("--no-timing", no_timing,
                "Report wall_time_s as 0 for byte-stable output");
  exp->add_option("--out", out)->required();

  // eval
  std::string est_path;
  auto* ev = app.add_subcommand("eval", "Print rel_error and recovered_fraction");
  ev->add_option("--truth", truth_path)->required();
  ev->add_option("--est", est_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(rows, cols, rank, noise, seed, out);
    if (comp->parsed())
      return cmd_complete(obs_path, truth_path, rank, theta, budget, seed, out,
                          query_log);
    if (exp->parsed()) {
      cfg.record_timing = !no_timing;
      return cmd_experiment(truth_path, cfg, out);
    }
    if (ev->parsed()) return cmd_eval(truth_path, est_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
