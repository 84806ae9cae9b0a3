#pragma once

#include "amc/completion.hpp"
#include "amc/io.hpp"

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>

namespace amc {

inline constexpr const char* kOrderExtend = "order_extend";
inline constexpr const char* kRandomBaseline = "random_baseline";
inline constexpr const char* kSequential = "sequential";

struct ExperimentConfig {
  int rank = 1;
  double theta = 1.0;
  double initial_mask_fraction = 0.4;  // fraction of the critical mask size
  std::vector<long> budgets;           // nonnegative, strictly increasing
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> algorithms;
  bool record_timing = true;  // false pins wall_time_s to 0 for byte-stable output
};

struct ExperimentRow {
  std::string algorithm;
  long b = 0;
  long queries_used = 0;
  double rel_error = 0.0;
  double recovered_fraction = 0.0;
  double wall_time_s = 0.0;
  std::uint64_t seed = 0;
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
  long phi = 0;           // critical mask size of the truth
  long m0 = 0;            // initial observed entries per cell
  long critical_gap = 0;  // phi - m0: queries needed to reach the critical size
};

inline void validate_config(const ExperimentConfig& cfg) {
  if (cfg.rank < 1) throw std::invalid_argument("experiment: rank must be >= 1");
  if (!(cfg.initial_mask_fraction > 0.0 && cfg.initial_mask_fraction < 1.0))
    throw std::invalid_argument("experiment: initial_mask_fraction must be in (0, 1)");
  if (cfg.budgets.empty() || cfg.seeds.empty() || cfg.algorithms.empty())
    throw std::invalid_argument("experiment: budgets, seeds and algorithms must be nonempty");
  for (std::size_t k = 0; k < cfg.budgets.size(); ++k) {
    if (cfg.budgets[k] < 0)
      throw std::invalid_argument("experiment: budgets must be nonnegative");
    if (k > 0 && cfg.budgets[k] <= cfg.budgets[k - 1])
      throw std::invalid_argument("experiment: budgets must be strictly increasing");
  }
  for (const std::string& a : cfg.algorithms)
    if (a != kOrderExtend && a != kRandomBaseline && a != kSequential)
      throw std::invalid_argument("experiment: unknown algorithm '" + a + "'");
}

/// Extends obs with b uniformly random previously unobserved entries filled
/// from truth. The stand-in for passive baselines: they see more data but
/// choose the positions blindly.
inline ObservedMatrix random_extend_baseline(const ObservedMatrix& obs,
                                             const Matrix& truth, long b,
                                             std::uint64_t seed) {
  const long total = static_cast<long>(obs.n_rows()) * obs.n_cols();
  const long missing = total - static_cast<long>(obs.size());
  if (b < 0 || b > missing)
    throw std::invalid_argument("random_extend_baseline: b exceeds missing entries");

  std::vector<Position> pool;
  pool.reserve(missing);
  for (int i = 0; i < obs.n_rows(); ++i)
    for (int j = 0; j < obs.n_cols(); ++j)
      if (!obs.contains(i, j)) pool.push_back(Position{i, j});

  std::mt19937_64 rng(seed);
  ObservedMatrix out = obs;
  for (long k = 0; k < b; ++k) {
    std::uniform_int_distribution<long> pick(k, missing - 1);
    std::swap(pool[k], pool[pick(rng)]);
    out.set(pool[k].row, pool[k].col, truth(pool[k].row, pool[k].col));
  }
  return out;
}

namespace detail {

inline CompletionReport run_sequential(const ObservedMatrix& obs, int r,
                                       std::uint64_t seed) {
  const MaskGraph g = build_mask_graph(obs.mask());
  const Ordering pi = adjust_order(g, smallest_last_order(g), r);
  CompletionOptions opts;
  opts.seed = seed;
  return sequential_complete(obs, r, pi, opts);
}

inline ExperimentRow run_cell(const Matrix& truth, const ExperimentConfig& cfg,
                              const std::string& algo, long b,
                              std::uint64_t seed, long m0) {
  const int n1 = static_cast<int>(truth.rows());
  const int n2 = static_cast<int>(truth.cols());
  const Mask mask = sample_random_mask(n1, n2, m0, seed);
  const ObservedMatrix obs = observe(truth, mask);

  ExperimentRow row;
  row.algorithm = algo;
  row.b = b;
  row.seed = seed;

  const auto start = std::chrono::steady_clock::now();
  CompletionReport report;
  if (algo == kOrderExtend) {
    GroundTruthOracle oracle(truth, b);
    CompletionOptions opts;
    opts.theta = cfg.theta;
    opts.seed = seed;
    report = order_and_extend(obs, cfg.rank, oracle, opts);
    row.queries_used = report.queries_used;
  } else if (algo == kRandomBaseline) {
    const long missing = static_cast<long>(n1) * n2 - m0;
    const long extend = std::min(b, missing);
    const ObservedMatrix extended =
        random_extend_baseline(obs, truth, extend, seed);
    report = run_sequential(extended, cfg.rank, seed);
    row.queries_used = extend;
  } else {
    report = run_sequential(obs, cfg.rank, seed);
    row.queries_used = 0;
  }
  const auto stop = std::chrono::steady_clock::now();

  row.rel_error = rel_error(truth, report.estimate);
  row.recovered_fraction = report.recovered_fraction();
  if (cfg.record_timing)
    row.wall_time_s = std::chrono::duration<double>(stop - start).count();
  return row;
}

inline int thread_cap() {
  const char* env = std::getenv("AMC_THREADS");
  if (env == nullptr) return 1;
  const int n = std::atoi(env);
  return n >= 1 ? n : 1;
}

}  // namespace detail

/// Runs every (algorithm, budget, seed) cell on a fresh initial mask of
/// round(initial_mask_fraction * phi) entries and reports one row per cell.
/// Relative error is computed over all entries of the truth, observed and
/// unobserved alike. Cells are independent; AMC_THREADS caps parallelism and
/// rows always come back in (algorithm, b, seed) order.
inline ExperimentResult run_experiment(const Matrix& truth,
                                       const ExperimentConfig& cfg) {
  validate_config(cfg);
  const int n1 = static_cast<int>(truth.rows());
  const int n2 = static_cast<int>(truth.cols());
  if (cfg.rank > std::min(n1, n2))
    throw std::invalid_argument("experiment: rank exceeds matrix dimensions");

  ExperimentResult result;
  result.phi = critical_mask_size(n1, n2, cfg.rank);
  result.m0 = std::lround(cfg.initial_mask_fraction * result.phi);
  if (result.m0 < 1) result.m0 = 1;
  result.critical_gap = result.phi - result.m0;

  struct Cell {
    std::string algo;
    long b;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const std::string& algo : cfg.algorithms)
    for (long b : cfg.budgets)
      for (std::uint64_t seed : cfg.seeds) cells.push_back(Cell{algo, b, seed});

  result.rows.resize(cells.size());
  const int threads = std::min<int>(detail::thread_cap(),
                                    static_cast<int>(cells.size()));
  auto worker = [&](int t) {
    for (std::size_t k = t; k < cells.size(); k += threads)
      result.rows[k] = detail::run_cell(truth, cfg, cells[k].algo, cells[k].b,
                                        cells[k].seed, result.m0);
  };
  if (threads <= 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
    for (std::thread& th : pool) th.join();
  }
  return result;
}

inline void write_experiment_csv(std::ostream& out,
                                 const std::vector<ExperimentRow>& rows) {
  out << "algorithm,b,queries_used,rel_error,recovered_fraction,wall_time_s,seed\n";
  for (const ExperimentRow& row : rows)
    out << row.algorithm << ',' << row.b << ',' << row.queries_used << ','
        << format_double(row.rel_error) << ','
        << format_double(row.recovered_fraction) << ','
        << format_double(row.wall_time_s) << ',' << row.seed << '\n';
}

inline void write_experiment_csv(const std::string& path,
                                 const std::vector<ExperimentRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open for writing");
  write_experiment_csv(out, rows);
}

}  // namespace amc
