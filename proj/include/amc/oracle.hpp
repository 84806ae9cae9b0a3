#pragma once

#include "amc/matrix.hpp"

#include <optional>
#include <random>
#include <set>
#include <vector>

namespace amc {

struct QueryRecord {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

class BudgetExhaustedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RestrictedQueryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DuplicateQueryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Budgeted access to hidden ground-truth entries. Every successful query
/// costs exactly one unit of budget and is appended to the log.
class QueryOracle {
 public:
  virtual ~QueryOracle() = default;
  virtual double query(int i, int j) = 0;
  virtual long remaining_budget() const = 0;
  virtual const std::vector<QueryRecord>& log() const = 0;
  /// True iff query(i, j) would succeed right now.
  virtual bool can_query(int i, int j) const = 0;
};

/// Oracle backed by a fully known truth matrix, optionally restricted to a
/// queryable mask. Repeated queries of the same position are rejected.
class GroundTruthOracle final : public QueryOracle {
 public:
  GroundTruthOracle(Matrix truth, long budget,
                    std::optional<Mask> queryable = std::nullopt)
      : truth_(std::move(truth)), budget_(budget),
        queryable_(std::move(queryable)) {
    if (budget < 0)
      throw std::invalid_argument("GroundTruthOracle: negative budget");
  }

  double query(int i, int j) override {
    if (i < 0 || i >= truth_.rows() || j < 0 || j >= truth_.cols())
      throw std::out_of_range("GroundTruthOracle: position out of bounds");
    if (queryable_ && !queryable_->contains(i, j))
      throw RestrictedQueryError("GroundTruthOracle: position not queryable");
    if (asked_.count(Position{i, j}))
      throw DuplicateQueryError("GroundTruthOracle: position already queried");
    if (budget_ <= 0)
      throw BudgetExhaustedError("GroundTruthOracle: budget exhausted");
    asked_.insert(Position{i, j});
    --budget_;
    log_.push_back(QueryRecord{i, j, truth_(i, j)});
    return truth_(i, j);
  }

  long remaining_budget() const override { return budget_; }
  const std::vector<QueryRecord>& log() const override { return log_; }

  bool can_query(int i, int j) const override {
    if (budget_ <= 0) return false;
    if (i < 0 || i >= truth_.rows() || j < 0 || j >= truth_.cols()) return false;
    if (queryable_ && !queryable_->contains(i, j)) return false;
    return asked_.count(Position{i, j}) == 0;
  }

 private:
  Matrix truth_;
  long budget_;
  std::optional<Mask> queryable_;
  std::set<Position> asked_;
  std::vector<QueryRecord> log_;
};

/// Seeded sampler of stand-in values for unqueried entries: draws uniformly
/// from the observed values in row i and column j, falling back to all
/// observed values. Samples never touch the budget or the query log.
class SurrogateSampler {
 public:
  SurrogateSampler(const ObservedMatrix& obs, std::uint64_t seed)
      : row_values_(obs.n_rows()), col_values_(obs.n_cols()), rng_(seed) {
    for (const auto& [pos, value] : obs.values()) add(pos.row, pos.col, value);
  }

  /// Registers a newly revealed entry so later samples reflect it.
  void add(int i, int j, double value) {
    row_values_[i].push_back(value);
    col_values_[j].push_back(value);
    all_values_.push_back(value);
  }

  double operator()(int i, int j) {
    const auto& rv = row_values_[i];
    const auto& cv = col_values_[j];
    const std::size_t n = rv.size() + cv.size();
    if (n == 0) {
      if (all_values_.empty()) return 0.0;  // nothing observed anywhere yet
      std::uniform_int_distribution<std::size_t> pick(0, all_values_.size() - 1);
      return all_values_[pick(rng_)];
    }
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    const std::size_t k = pick(rng_);
    return k < rv.size() ? rv[k] : cv[k - rv.size()];
  }

 private:
  std::vector<std::vector<double>> row_values_;
  std::vector<std::vector<double>> col_values_;
  std::vector<double> all_values_;
  std::mt19937_64 rng_;
};

inline SurrogateSampler surrogate_sampler(const ObservedMatrix& obs,
                                          std::uint64_t seed) {
  if (obs.size() == 0)
    throw std::invalid_argument("surrogate_sampler: no observed values");
  return SurrogateSampler(obs, seed);
}

}  // namespace amc
