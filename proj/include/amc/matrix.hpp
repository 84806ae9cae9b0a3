#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <vector>

namespace amc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Singular values below kRankTol * sigma_max are treated as zero when
/// deciding numerical rank.
inline constexpr double kRankTol = 1e-12;

/// A (row, col) coordinate, 0-based internally. File formats are 1-based.
struct Position {
  int row = 0;
  int col = 0;
  friend auto operator<=>(const Position&, const Position&) = default;
};

/// The set of observed positions of a matrix (the mask).
class Mask {
 public:
  Mask(int n_rows, int n_cols) : n_rows_(n_rows), n_cols_(n_cols) {
    if (n_rows <= 0 || n_cols <= 0)
      throw std::invalid_argument("Mask: dimensions must be positive");
  }

  int n_rows() const { return n_rows_; }
  int n_cols() const { return n_cols_; }
  std::size_t size() const { return positions_.size(); }

  bool contains(int i, int j) const {
    return positions_.count(Position{i, j}) > 0;
  }

  /// Inserts a position. Throws on out-of-bounds or duplicate.
  void insert(int i, int j) {
    if (i < 0 || i >= n_rows_ || j < 0 || j >= n_cols_)
      throw std::out_of_range("Mask: position out of bounds");
    if (!positions_.insert(Position{i, j}).second)
      throw std::invalid_argument("Mask: duplicate position");
  }

  const std::set<Position>& positions() const { return positions_; }

 private:
  int n_rows_;
  int n_cols_;
  std::set<Position> positions_;
};

/// A mask together with the values at each observed position.
class ObservedMatrix {
 public:
  ObservedMatrix(int n_rows, int n_cols) : mask_(n_rows, n_cols) {}

  int n_rows() const { return mask_.n_rows(); }
  int n_cols() const { return mask_.n_cols(); }
  const Mask& mask() const { return mask_; }
  std::size_t size() const { return mask_.size(); }

  void set(int i, int j, double value) {
    if (!std::isfinite(value))
      throw std::invalid_argument("ObservedMatrix: value must be finite");
    mask_.insert(i, j);  // validates bounds and duplicates
    values_[Position{i, j}] = value;
  }

  bool contains(int i, int j) const { return mask_.contains(i, j); }

  double at(int i, int j) const {
    auto it = values_.find(Position{i, j});
    if (it == values_.end())
      throw std::out_of_range("ObservedMatrix: position not observed");
    return it->second;
  }

  const std::map<Position, double>& values() const { return values_; }

 private:
  Mask mask_;
  std::map<Position, double> values_;
};

inline double frobenius_norm(const Matrix& m) { return m.norm(); }

/// Relative reconstruction error ||truth - estimate||_F / ||truth||_F.
inline double rel_error(const Matrix& truth, const Matrix& estimate) {
  if (truth.rows() != estimate.rows() || truth.cols() != estimate.cols())
    throw std::invalid_argument("rel_error: dimension mismatch");
  const double denom = truth.norm();
  if (denom == 0.0)
    throw std::invalid_argument("rel_error: reference matrix has zero norm");
  return (truth - estimate).norm() / denom;
}

/// Degrees of freedom of an n1 x n2 rank-r matrix: r * (n1 + n2 - r).
/// A lower bound on the number of entries needed for exact completion.
inline long critical_mask_size(int n1, int n2, int r) {
  if (n1 <= 0 || n2 <= 0)
    throw std::invalid_argument("critical_mask_size: dimensions must be positive");
  if (r < 0 || r > std::min(n1, n2))
    throw std::invalid_argument("critical_mask_size: rank out of range");
  return static_cast<long>(r) * (static_cast<long>(n1) + n2 - r);
}

/// Best rank-r approximation under the Frobenius norm, by zeroing all but
/// the largest r singular values.
inline Matrix truncate_to_rank(const Matrix& m, int r) {
  if (r < 1 || r > std::min(m.rows(), m.cols()))
    throw std::invalid_argument("truncate_to_rank: rank out of range");
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vector sigma = svd.singularValues();
  for (Eigen::Index k = r; k < sigma.size(); ++k) sigma(k) = 0.0;
  return svd.matrixU() * sigma.asDiagonal() * svd.matrixV().transpose();
}

/// Number of singular values above kRankTol relative to the largest.
inline int numerical_rank(const Matrix& m) {
  Eigen::BDCSVD<Matrix> svd(m);
  const Vector& sigma = svd.singularValues();
  if (sigma.size() == 0 || sigma(0) == 0.0) return 0;
  int rank = 0;
  for (Eigen::Index k = 0; k < sigma.size(); ++k)
    if (sigma(k) > kRankTol * sigma(0)) ++rank;
  return rank;
}

/// Seeded random matrix X*Y with X, Y standard normal, plus optional
/// Gaussian noise with standard deviation noise_scale * ||XY||_F / sqrt(n1*n2).
/// noise_scale = 0 gives a matrix of exact rank r.
inline Matrix generate_low_rank(int n1, int n2, int r, double noise_scale,
                                std::uint64_t seed) {
  if (n1 <= 0 || n2 <= 0 || r < 1 || r > std::min(n1, n2))
    throw std::invalid_argument("generate_low_rank: invalid dimensions or rank");
  if (noise_scale < 0.0)
    throw std::invalid_argument("generate_low_rank: noise_scale must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix x(n1, r), y(r, n2);
  for (int i = 0; i < n1; ++i)
    for (int k = 0; k < r; ++k) x(i, k) = gauss(rng);
  for (int k = 0; k < r; ++k)
    for (int j = 0; j < n2; ++j) y(k, j) = gauss(rng);
  Matrix t = x * y;
  if (noise_scale > 0.0) {
    const double sd =
        noise_scale * t.norm() / std::sqrt(static_cast<double>(n1) * n2);
    for (int i = 0; i < n1; ++i)
      for (int j = 0; j < n2; ++j) t(i, j) += sd * gauss(rng);
  }
  return t;
}

/// Mask of exactly m distinct uniformly random positions.
inline Mask sample_random_mask(int n1, int n2, long m, std::uint64_t seed) {
  const long total = static_cast<long>(n1) * n2;
  if (m < 0 || m > total)
    throw std::invalid_argument("sample_random_mask: m out of range");
  // Partial Fisher-Yates over the flattened index space.
  std::vector<long> idx(total);
  for (long k = 0; k < total; ++k) idx[k] = k;
  std::mt19937_64 rng(seed);
  Mask mask(n1, n2);
  for (long k = 0; k < m; ++k) {
    std::uniform_int_distribution<long> pick(k, total - 1);
    std::swap(idx[k], idx[pick(rng)]);
    mask.insert(static_cast<int>(idx[k] / n2), static_cast<int>(idx[k] % n2));
  }
  return mask;
}

/// Restricts a full matrix to the given mask.
inline ObservedMatrix observe(const Matrix& truth, const Mask& mask) {
  if (truth.rows() != mask.n_rows() || truth.cols() != mask.n_cols())
    throw std::invalid_argument("observe: dimension mismatch");
  ObservedMatrix obs(mask.n_rows(), mask.n_cols());
  for (const Position& p : mask.positions()) obs.set(p.row, p.col, truth(p.row, p.col));
  return obs;
}

}  // namespace amc
