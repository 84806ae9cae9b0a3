#pragma once

#include "amc/matrix.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace amc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// A small least-squares system A y = t with A of size k x r.
struct LinearSystem {
  Matrix A;  // k x r
  Vector t;  // k
};

class RankDeficientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// argmin_y ||A y - t||_2 for A with full column rank. Throws
/// RankDeficientError when sigma_min <= kRankTol * sigma_max (or k < r).
inline Vector solve_least_squares(const LinearSystem& sys) {
  if (sys.A.rows() != sys.t.size())
    throw std::invalid_argument("solve_least_squares: shape mismatch");
  if (sys.A.rows() < sys.A.cols())
    throw RankDeficientError("solve_least_squares: fewer equations than unknowns");
  Eigen::JacobiSVD<Matrix> svd(sys.A,
                               Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  if (sigma(0) == 0.0 || sigma(sigma.size() - 1) <= kRankTol * sigma(0))
    throw RankDeficientError("solve_least_squares: rank-deficient system");
  return svd.solve(sys.t);
}

/// Local condition number l(A, t) = ||A^+||_2 * ||t||_2 / ||y||_2 with
/// y the least-squares solution. +infinity for rank-deficient A or y = 0.
/// Unlike kappa(A), this measures sensitivity for the specific target t.
inline double local_condition(const LinearSystem& sys) {
  if (sys.A.rows() < sys.A.cols()) return kInf;
  Eigen::JacobiSVD<Matrix> svd(sys.A,
                               Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  if (sigma(0) == 0.0 || sigma(sigma.size() - 1) <= kRankTol * sigma(0))
    return kInf;
  const Vector y = svd.solve(sys.t);
  const double ynorm = y.norm();
  if (ynorm == 0.0) return kInf;
  return (1.0 / sigma(sigma.size() - 1)) * sys.t.norm() / ynorm;
}

/// Classical condition number sigma_max / sigma_min; +infinity if singular.
inline double condition_number(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a);
  const Vector& sigma = svd.singularValues();
  if (sigma(0) == 0.0 || sigma(sigma.size() - 1) <= kRankTol * sigma(0))
    return kInf;
  return sigma(0) / sigma(sigma.size() - 1);
}

/// Outcome of a stability check against the threshold theta.
struct StabilityVerdict {
  double ell = kInf;
  bool stable = false;
};

/// ell <= theta counts as stable, with a small relative slack so borderline
/// systems (identity seeds have ell exactly 1) survive rounding at theta = 1.
inline StabilityVerdict check_stability(double ell, double theta) {
  return StabilityVerdict{ell, ell <= theta * (1.0 + 1e-9)};
}

/// Given C = (A^T A)^{-1}, returns D = (A^T A + alpha^T alpha)^{-1} via the
/// Sherman-Morrison formula: D = C - (C a^T a C) / (1 + a C a^T).
inline Matrix sherman_morrison_update(const Matrix& c, const RowVector& alpha) {
  if (c.rows() != c.cols() || c.cols() != alpha.size())
    throw std::invalid_argument("sherman_morrison_update: shape mismatch");
  const Vector ca = c * alpha.transpose();  // C is symmetric
  const double denom = 1.0 + alpha.dot(ca);
  if (denom <= kRankTol)
    throw std::runtime_error("sherman_morrison_update: nonpositive denominator");
  return c - (ca * ca.transpose()) / denom;
}

/// Local condition number of the extended system [A; alpha] y = [t; tau],
/// computed from C = (A^T A)^{-1} with a rank-one update instead of a fresh
/// inversion. The solution operator of the extended system is D A~^T.
inline double extended_local_condition(const Matrix& c, const Matrix& a,
                                       const RowVector& alpha, const Vector& t,
                                       double tau) {
  Matrix d;
  try {
    d = sherman_morrison_update(c, alpha);
  } catch (const std::runtime_error&) {
    return kInf;
  }
  const Eigen::Index k = a.rows();
  Matrix a_ext(k + 1, a.cols());
  a_ext.topRows(k) = a;
  a_ext.row(k) = alpha;
  Vector t_ext(k + 1);
  t_ext.head(k) = t;
  t_ext(k) = tau;

  const Matrix solver = d * a_ext.transpose();  // r x (k+1)
  const Vector y = solver * t_ext;
  const double ynorm = y.norm();
  if (ynorm == 0.0) return kInf;
  Eigen::JacobiSVD<Matrix> svd(solver);
  return svd.singularValues()(0) * t_ext.norm() / ynorm;
}

/// Local condition of [A; alpha] y = [t; tau] evaluated from scratch. Valid
/// for any row count: underdetermined systems use the minimum-norm solution,
/// and a rank-deficient extension scores +infinity. Used to rank repair
/// candidates for systems that are still incomplete.
inline double extension_score(const LinearSystem& sys, const RowVector& alpha,
                              double tau) {
  const Eigen::Index k = sys.A.rows();
  Matrix a_ext(k + 1, sys.A.cols());
  a_ext.topRows(k) = sys.A;
  a_ext.row(k) = alpha;
  Vector t_ext(k + 1);
  t_ext.head(k) = sys.t;
  t_ext(k) = tau;

  Eigen::JacobiSVD<Matrix> svd(a_ext,
                               Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  const Eigen::Index last = sigma.size() - 1;
  if (sigma(0) == 0.0 || sigma(last) <= kRankTol * sigma(0)) return kInf;
  const Vector y = svd.solve(t_ext);
  const double ynorm = y.norm();
  if (ynorm == 0.0) return kInf;
  return (1.0 / sigma(last)) * t_ext.norm() / ynorm;
}

/// A previously computed factor row proposed for extending a system.
struct StabilizeCandidate {
  int index = 0;     // node index of the factor row/column
  RowVector alpha;   // its r values
};

/// Scores every candidate extension with a surrogate target value and
/// returns the minimizer if it would bring the system below theta, else
/// nullopt (the caller defers the system). Ties break on lowest index.
inline std::optional<StabilizeCandidate> stabilize(
    const LinearSystem& sys, double theta,
    const std::vector<StabilizeCandidate>& candidates,
    const std::function<double(int)>& surrogate) {
  if (candidates.empty()) return std::nullopt;

  const Matrix gram = sys.A.transpose() * sys.A;
  Eigen::FullPivLU<Matrix> lu(gram);
  if (!lu.isInvertible()) return std::nullopt;
  const Matrix c = lu.inverse();

  int best = -1;
  double best_score = kInf;
  for (int i = 0; i < static_cast<int>(candidates.size()); ++i) {
    const double score = extended_local_condition(
        c, sys.A, candidates[i].alpha, sys.t, surrogate(candidates[i].index));
    if (score < best_score ||
        (score == best_score && best >= 0 &&
         candidates[i].index < candidates[best].index)) {
      best_score = score;
      best = i;
    }
  }
  if (best < 0 || !check_stability(best_score, theta).stable)
    return std::nullopt;
  return candidates[best];
}

}  // namespace amc
