#pragma once

#include "amc/mask_graph.hpp"
#include "amc/matrix.hpp"
#include "amc/oracle.hpp"
#include "amc/stability.hpp"

#include <deque>
#include <utility>

namespace amc {

/// Partially computed factors X (n1 x r) and Y (r x n2) with per-row and
/// per-column computed flags. A row or column feeds downstream systems only
/// once its flag is set.
struct FactorState {
  FactorState(int n1, int n2, int r)
      : X(Matrix::Zero(n1, r)), Y(Matrix::Zero(r, n2)), rank(r),
        row_done(n1, 0), col_done(n2, 0) {}

  Matrix X;
  Matrix Y;
  int rank;
  std::vector<char> row_done;
  std::vector<char> col_done;

  bool done(NodeId u) const {
    return u.side == Side::Row ? row_done[u.index] != 0
                               : col_done[u.index] != 0;
  }
};

struct CompletionReport {
  Matrix estimate;                  // zero-filled where not recovered
  std::vector<char> recovered;      // row-major n1*n2 flags
  std::vector<QueryRecord> queries;
  long queries_used = 0;
  std::vector<NodeId> unrecovered_nodes;

  bool is_recovered(int i, int j) const {
    return recovered[static_cast<std::size_t>(i) * estimate.cols() + j] != 0;
  }

  double recovered_fraction() const {
    if (recovered.empty()) return 0.0;
    long n = 0;
    for (char f : recovered) n += f != 0;
    return static_cast<double>(n) / static_cast<double>(recovered.size());
  }
};

enum class InstabilityTest {
  LocalCondition,   // unstable iff l(A, t) exceeds theta
  ConditionNumber,  // unstable iff kappa(A) >= kappa_threshold
};

struct CompletionOptions {
  double theta = 1.0;
  int max_deferrals = 2;
  int max_extensions = 0;  // <= 0 means r extensions per system
  int adjust_passes = 1;
  std::uint64_t seed = 0;  // drives surrogate sampling only
  InstabilityTest instability = InstabilityTest::LocalCondition;
  double kappa_threshold = 0.0;
};

/// A solved overdetermined system whose relative residual exceeds this is
/// evidence that the observations carry noise; the driver then spends spare
/// budget on redundant equations so least squares can average the noise out.
/// Exact data keeps residuals at roundoff level, far below this.
inline constexpr double kNoiseResidualTol = 1e-5;

/// The engine buys an extra equation for any system this close to rank
/// deficiency rather than solving it: the solve would amplify roundoff into
/// the factors. Looser than the kRankTol contract of solve_least_squares.
inline constexpr double kRepairRankTol = 1e-9;

/// Held-out queries used to decide whether the observations are noisy when
/// the run itself produced no overdetermined system to tell from.
inline constexpr int kNoiseProbes = 2;

/// Redundant equations tame noise only in bulk: the least-squares averaging
/// starts to pay off once the total number of observations reaches a small
/// multiple of the degrees of freedom r*(n1+n2-r). Below that, extra queries
/// cannot change the outcome and are not spent.
inline constexpr double kRedundancyAffordable = 2.5;

struct SeedSelection {
  Side side = Side::Row;
  std::vector<NodeId> seeds;
  Ordering order;
};

/// Picks the side whose r highest-degree nodes carry the larger total degree
/// (ties go to Row) and moves those nodes to the front of pi, preserving the
/// relative order of everything else. The seed factor block is the identity,
/// which is a valid choice by the basis freedom of the factorization.
inline SeedSelection select_seed(const MaskGraph& g, const Ordering& pi,
                                 int r) {
  if (g.n_rows() < r && g.n_cols() < r)
    throw std::invalid_argument("select_seed: neither side has r nodes");

  auto top_nodes = [&](Side side, int count) {
    const int n = side == Side::Row ? g.n_rows() : g.n_cols();
    std::vector<NodeId> nodes;
    nodes.reserve(n);
    for (int i = 0; i < n; ++i) nodes.push_back(NodeId{side, i});
    std::stable_sort(nodes.begin(), nodes.end(),
                     [&](NodeId a, NodeId b) { return g.degree(a) > g.degree(b); });
    nodes.resize(count);
    return nodes;
  };
  auto total_degree = [&](const std::vector<NodeId>& nodes) {
    long sum = 0;
    for (NodeId u : nodes) sum += g.degree(u);
    return sum;
  };

  Side side;
  if (g.n_rows() < r) {
    side = Side::Col;
  } else if (g.n_cols() < r) {
    side = Side::Row;
  } else {
    const long row_total = total_degree(top_nodes(Side::Row, r));
    const long col_total = total_degree(top_nodes(Side::Col, r));
    side = row_total >= col_total ? Side::Row : Side::Col;
  }
  std::vector<NodeId> seeds = top_nodes(side, r);

  std::vector<NodeId> seq;
  seq.reserve(pi.size());
  seq.insert(seq.end(), seeds.begin(), seeds.end());
  for (NodeId u : pi.sequence())
    if (std::find(seeds.begin(), seeds.end(), u) == seeds.end())
      seq.push_back(u);
  return SeedSelection{side, std::move(seeds),
                       Ordering(std::move(seq), g.n_rows(), g.n_cols())};
}

/// Assembles the least-squares system for node u from its computed
/// opposite-side neighbors: one equation per neighbor, targets taken from
/// the (possibly query-extended) observed matrix.
inline LinearSystem build_system(const FactorState& state,
                                 const ObservedMatrix& obs, NodeId u,
                                 const std::vector<NodeId>& computed_neighbors) {
  const int r = state.rank;
  const int k = static_cast<int>(computed_neighbors.size());
  LinearSystem sys{Matrix(k, r), Vector(k)};
  for (int row = 0; row < k; ++row) {
    const NodeId v = computed_neighbors[row];
    if (u.side == Side::Col) {
      sys.A.row(row) = state.X.row(v.index);
      sys.t(row) = obs.at(v.index, u.index);
    } else {
      sys.A.row(row) = state.Y.col(v.index).transpose();
      sys.t(row) = obs.at(u.index, v.index);
    }
  }
  return sys;
}

namespace detail {

/// Shared driver behind order_and_extend, sequential_complete and the
/// condition-number variant. Owns a mutable copy of the observations that
/// grows as queries are answered.
class CompletionEngine {
 public:
  CompletionEngine(const ObservedMatrix& obs, int r, QueryOracle* oracle,
                   const CompletionOptions& opts)
      : obs_(obs), graph_(build_mask_graph(obs.mask())), rank_(r),
        oracle_(oracle), opts_(opts), state_(obs.n_rows(), obs.n_cols(), r),
        sampler_(obs, opts.seed), initial_observed_(obs.size()) {
    if (r < 1 || r > std::min(obs.n_rows(), obs.n_cols()))
      throw std::invalid_argument("completion: invalid rank");
    if (opts_.max_extensions <= 0) opts_.max_extensions = r;
    if (oracle_ != nullptr) {
      const double reachable = static_cast<double>(initial_observed_) +
                               static_cast<double>(oracle_->remaining_budget());
      affordable_ = reachable >= kRedundancyAffordable *
                                    static_cast<double>(critical_mask_size(
                                        obs.n_rows(), obs.n_cols(), r));
    }
  }

  CompletionReport run(const Ordering& pi) {
    const SeedSelection seeding = select_seed(graph_, pi, rank_);
    apply_seeds(seeding);
    std::vector<NodeId> dead = sweep(seeding.order);

    if (oracle_ != nullptr && affordable_) {
      if (!noisy_) probe_for_noise();
      redundancy_pass();
      if (noisy_) {
        // Re-derive every factor from the enriched observations. The systems
        // are now overdetermined, so this second sequential pass starts the
        // polish sweeps from noise-averaged factors instead of whatever the
        // square-solve chain interpolated.
        apply_seeds(seeding);
        dead = sweep(seeding.order);
      }
    }
    polish_factors();
    return assemble_report(dead);
  }

 private:
  void apply_seeds(const SeedSelection& seeding) {
    state_ = FactorState(obs_.n_rows(), obs_.n_cols(), rank_);
    for (int k = 0; k < rank_; ++k) {
      const NodeId s = seeding.seeds[k];
      if (seeding.side == Side::Row) {
        state_.X.row(s.index) = RowVector::Unit(rank_, k);
        state_.row_done[s.index] = 1;
      } else {
        state_.Y.col(s.index) = Vector::Unit(rank_, k);
        state_.col_done[s.index] = 1;
      }
    }
  }

  /// Works the deferral queue over every uncomputed node in order. A node
  /// that exhausts its deferrals is provisionally written off, but each node
  /// solved later widens the pool of repair candidates, so written-off nodes
  /// are retried as long as a pass made progress. Returns the nodes that
  /// could not be solved.
  std::vector<NodeId> sweep(const Ordering& order) {
    dead_.assign(graph_.n_nodes(), 0);
    std::deque<std::pair<NodeId, int>> queue;
    for (NodeId u : order.sequence())
      if (!state_.done(u)) queue.emplace_back(u, 0);

    std::vector<NodeId> dead;
    while (!queue.empty()) {
      const std::size_t before = queue.size();
      while (!queue.empty()) {
        auto [u, deferrals] = queue.front();
        queue.pop_front();
        const bool final_attempt = deferrals >= opts_.max_deferrals;
        if (process(u, final_attempt)) continue;
        if (final_attempt) {
          dead.push_back(u);
          dead_[node_key(u)] = 1;
        } else {
          queue.emplace_back(u, deferrals + 1);
        }
      }
      if (dead.size() == before) break;  // nothing was solved this pass
      for (NodeId u : dead) {
        dead_[node_key(u)] = 0;
        queue.emplace_back(u, 0);
      }
      dead.clear();
    }
    return dead;
  }

  int node_key(NodeId u) const {
    return u.side == Side::Row ? u.index : graph_.n_rows() + u.index;
  }

  /// A neighbor that is neither computed nor written off may still deliver a
  /// free equation on a later pass.
  bool has_pending_neighbor(NodeId u) const {
    const Side opp = u.side == Side::Row ? Side::Col : Side::Row;
    for (int v : graph_.neighbors(u)) {
      const NodeId w{opp, v};
      if (!state_.done(w) && !dead_[node_key(w)]) return true;
    }
    return false;
  }

  std::vector<NodeId> computed_neighbors(NodeId u) const {
    const Side opp = u.side == Side::Row ? Side::Col : Side::Row;
    std::vector<NodeId> out;
    for (int v : graph_.neighbors(u)) {
      const NodeId w{opp, v};
      if (state_.done(w)) out.push_back(w);
    }
    return out;
  }

  Position entry_position(NodeId u, int opposite_index) const {
    return u.side == Side::Col ? Position{opposite_index, u.index}
                               : Position{u.index, opposite_index};
  }

  RowVector factor_row(NodeId u, int opposite_index) const {
    return u.side == Side::Col
               ? RowVector(state_.X.row(opposite_index))
               : RowVector(state_.Y.col(opposite_index).transpose());
  }

  double query_entry(NodeId u, int opposite_index) {
    const Position p = entry_position(u, opposite_index);
    const double value = oracle_->query(p.row, p.col);
    obs_.set(p.row, p.col, value);
    graph_.add_edge(p.row, p.col);
    sampler_.add(p.row, p.col, value);
    return value;
  }

  /// Computed opposite-side nodes whose entry against u is unobserved and
  /// currently queryable, excluding any already used in the system.
  std::vector<int> repair_candidates(NodeId u,
                                     const std::vector<char>& used) const {
    const Side opp = u.side == Side::Row ? Side::Col : Side::Row;
    const int n = opp == Side::Row ? graph_.n_rows() : graph_.n_cols();
    std::vector<int> out;
    for (int v = 0; v < n; ++v) {
      if (used[v] || !state_.done(NodeId{opp, v})) continue;
      const Position p = entry_position(u, v);
      if (obs_.contains(p.row, p.col)) continue;
      if (!oracle_->can_query(p.row, p.col)) continue;
      out.push_back(v);
    }
    return out;
  }

  /// Brings an incomplete system up to r equations by querying, one entry at
  /// a time, each pick minimizing the extended local condition scored with a
  /// surrogate target. Returns false (defer) when candidates or budget fall
  /// short; in that case no query is made.
  bool repair_incomplete(NodeId u, LinearSystem& sys, std::vector<char>& used) {
    const int need = rank_ - static_cast<int>(sys.A.rows());
    if (oracle_ == nullptr) return false;
    std::vector<int> candidates = repair_candidates(u, used);
    if (static_cast<int>(candidates.size()) < need ||
        oracle_->remaining_budget() < need)
      return false;

    for (int step = 0; step < need; ++step) {
      int best = -1;
      double best_score = kInf;
      for (int v : candidates) {
        const Position p = entry_position(u, v);
        const double tau = sampler_(p.row, p.col);
        const double score = extension_score(sys, factor_row(u, v), tau);
        if (best == -1 || score < best_score) {
          best_score = score;
          best = v;
        }
      }
      const double value = query_entry(u, best);
      append_equation(sys, factor_row(u, best), value);
      used[best] = 1;
      candidates.erase(std::find(candidates.begin(), candidates.end(), best));
    }
    return true;
  }

  /// Buys equations for a system too close to rank deficiency to solve:
  /// least squares on such a system would amplify roundoff into the factors
  /// and poison everything downstream. Returns whether full numerical rank
  /// was reached.
  bool repair_rank(NodeId u, LinearSystem& sys, std::vector<char>& used) {
    for (int tries = 0; tries < rank_ && near_rank_deficient(sys.A); ++tries) {
      if (oracle_ == nullptr || oracle_->remaining_budget() < 1) return false;
      int best = -1;
      double best_score = kInf;
      for (int v : repair_candidates(u, used)) {
        const Position p = entry_position(u, v);
        const double score =
            extension_score(sys, factor_row(u, v), sampler_(p.row, p.col));
        if (best == -1 || score < best_score) {
          best_score = score;
          best = v;
        }
      }
      if (best < 0) return false;
      append_equation(sys, factor_row(u, best), query_entry(u, best));
      used[best] = 1;
    }
    return !near_rank_deficient(sys.A);
  }

  /// The stabilization loop: while the instability test objects, extend the
  /// system with a previously computed factor row. The strict acceptance bar
  /// (extended measure below the threshold) is tried first; since l(A,t) >= 1
  /// by definition, theta = 1 makes that bar unreachable for most systems, so
  /// under noisy observations the loop additionally accepts the best-scoring
  /// candidate as a redundant equation, up to this node's share of the spare
  /// budget. Redundancy is what actually tames noise amplification: a tall
  /// consistent-in-expectation system averages the noise out.
  bool repair_unstable(NodeId u, LinearSystem& sys, std::vector<char>& used) {
    if (oracle_ == nullptr) return is_stable(sys);
    const bool spend = noisy_ && affordable_;
    const long cap = opts_.max_extensions + (spend ? extension_allowance(u) : 0);
    for (long bought = 0; bought < cap; ++bought) {
      if (is_stable(sys)) return true;
      if (oracle_->remaining_budget() - completion_reserve(u) < 1) return false;

      std::vector<StabilizeCandidate> candidates;
      for (int v : repair_candidates(u, used))
        candidates.push_back(StabilizeCandidate{v, factor_row(u, v)});
      if (candidates.empty()) return false;

      std::optional<StabilizeCandidate> chosen;
      if (opts_.instability == InstabilityTest::LocalCondition) {
        auto surrogate = [&](int v) {
          const Position p = entry_position(u, v);
          return sampler_(p.row, p.col);
        };
        chosen = stabilize(sys, opts_.theta, candidates, surrogate);
        if (!chosen && spend)
          chosen = best_by_surrogate(sys, candidates, surrogate);
      } else {
        chosen = stabilize_by_condition_number(sys, candidates,
                                               opts_.kappa_threshold);
        if (!chosen && spend)
          chosen = stabilize_by_condition_number(sys, candidates, kInf);
      }
      if (!chosen) return false;

      const double value = query_entry(u, chosen->index);
      append_equation(sys, chosen->alpha, value);
      used[chosen->index] = 1;
    }
    return is_stable(sys);
  }

  /// Candidate minimizing the surrogate-scored extended local condition,
  /// regardless of the threshold. Ties break on lowest index.
  static std::optional<StabilizeCandidate> best_by_surrogate(
      const LinearSystem& sys, const std::vector<StabilizeCandidate>& candidates,
      const std::function<double(int)>& surrogate) {
    int best = -1;
    double best_score = kInf;
    for (int i = 0; i < static_cast<int>(candidates.size()); ++i) {
      const double score = extension_score(sys, candidates[i].alpha,
                                           surrogate(candidates[i].index));
      if (best == -1 || score < best_score ||
          (score == best_score &&
           candidates[i].index < candidates[best].index)) {
        best_score = score;
        best = i;
      }
    }
    if (best < 0 || best_score == kInf) return std::nullopt;
    return candidates[best];
  }

  /// kappa(A) ignores the target vector, so the variant needs no surrogates:
  /// it picks the candidate minimizing the extended condition number, subject
  /// to the acceptance threshold.
  static std::optional<StabilizeCandidate> stabilize_by_condition_number(
      const LinearSystem& sys, const std::vector<StabilizeCandidate>& candidates,
      double accept_below) {
    int best = -1;
    double best_kappa = kInf;
    for (int i = 0; i < static_cast<int>(candidates.size()); ++i) {
      Matrix ext(sys.A.rows() + 1, sys.A.cols());
      ext.topRows(sys.A.rows()) = sys.A;
      ext.row(sys.A.rows()) = candidates[i].alpha;
      const double kappa = condition_number(ext);
      if (best == -1 || kappa < best_kappa ||
          (kappa == best_kappa &&
           candidates[i].index < candidates[best].index)) {
        best_kappa = kappa;
        best = i;
      }
    }
    if (best < 0 || best_kappa >= accept_below) return std::nullopt;
    return candidates[best];
  }

  /// Queries the still-pending nodes would need to reach r equations each.
  /// Escalation may only spend budget beyond this reserve, so buying
  /// stability never starves completion.
  long completion_reserve(NodeId skip) const {
    long total = 0;
    for (int k = 0; k < graph_.n_nodes(); ++k) {
      const NodeId u = k < graph_.n_rows()
                           ? NodeId{Side::Row, k}
                           : NodeId{Side::Col, k - graph_.n_rows()};
      if (u == skip || state_.done(u) || dead_[k]) continue;
      const int have = static_cast<int>(computed_neighbors(u).size());
      if (have < rank_) total += rank_ - have;
    }
    return total;
  }

  static bool near_rank_deficient(const Matrix& a) {
    if (a.rows() < a.cols()) return true;
    Eigen::JacobiSVD<Matrix> svd(a);
    const Vector& sigma = svd.singularValues();
    return sigma(0) == 0.0 ||
           sigma(sigma.size() - 1) <= kRepairRankTol * sigma(0);
  }

  /// This node's share of the budget left over after reserving enough to
  /// complete every still-pending system: spare budget split evenly across
  /// pending nodes, rounded up.
  long extension_allowance(NodeId u) const {
    const long spare = oracle_->remaining_budget() - completion_reserve(u);
    if (spare < 1) return 0;
    long pending = 0;
    for (int k = 0; k < graph_.n_nodes(); ++k) {
      const NodeId w = k < graph_.n_rows()
                           ? NodeId{Side::Row, k}
                           : NodeId{Side::Col, k - graph_.n_rows()};
      if (!state_.done(w) && !dead_[k]) ++pending;
    }
    if (pending < 1) pending = 1;
    return (spare + pending - 1) / pending;
  }

  /// An overdetermined system with a least-squares residual above roundoff
  /// level means the observations are noisy; from then on the stabilization
  /// loop buys redundant equations. Checked when the system is assembled, so
  /// detection does not wait for a deferred system to finally be solved.
  void note_noise_evidence(const LinearSystem& sys) {
    if (noisy_ || sys.A.rows() <= rank_ || near_rank_deficient(sys.A)) return;
    const double tnorm = sys.t.norm();
    if (tnorm == 0.0) return;
    Vector y;
    try {
      y = solve_least_squares(sys);
    } catch (const RankDeficientError&) {
      return;
    }
    if ((sys.A * y - sys.t).norm() > kNoiseResidualTol * tnorm) noisy_ = true;
  }

  bool is_stable(const LinearSystem& sys) const {
    if (sys.A.rows() < rank_) return false;
    if (opts_.instability == InstabilityTest::ConditionNumber)
      return condition_number(sys.A) < opts_.kappa_threshold;
    return check_stability(local_condition(sys), opts_.theta).stable;
  }

  static void append_equation(LinearSystem& sys, const RowVector& alpha,
                              double target) {
    sys.A.conservativeResize(sys.A.rows() + 1, Eigen::NoChange);
    sys.A.row(sys.A.rows() - 1) = alpha;
    sys.t.conservativeResize(sys.t.size() + 1);
    sys.t(sys.t.size() - 1) = target;
  }

  /// One attempt at node u. An incomplete system with neighbors still in
  /// flight is deferred rather than repaired: a later pass may deliver the
  /// missing equations for free. On the final attempt a complete full-rank
  /// system is solved even if the stability test still objects: least squares
  /// is well defined and a partial answer beats none. Returns true iff u was
  /// solved.
  bool process(NodeId u, bool final_attempt) {
    const std::vector<NodeId> nbrs = computed_neighbors(u);
    const Side opp = u.side == Side::Row ? Side::Col : Side::Row;
    std::vector<char> used(opp == Side::Row ? graph_.n_rows() : graph_.n_cols(),
                           0);
    for (NodeId v : nbrs) used[v.index] = 1;
    LinearSystem sys = build_system(state_, obs_, u, nbrs);

    if (sys.A.rows() < rank_) {
      if (!final_attempt && has_pending_neighbor(u)) return false;
      if (!repair_incomplete(u, sys, used)) return false;
    }
    if (!repair_rank(u, sys, used)) return false;
    note_noise_evidence(sys);

    if (!repair_unstable(u, sys, used) && !final_attempt) return false;

    Vector y;
    try {
      y = solve_least_squares(sys);
    } catch (const RankDeficientError&) {
      return false;
    }
    if (u.side == Side::Col) {
      state_.Y.col(u.index) = y;
      state_.col_done[u.index] = 1;
    } else {
      state_.X.row(u.index) = y.transpose();
      state_.row_done[u.index] = 1;
    }
    return true;
  }

  std::vector<NodeId> computed_nodes() const {
    std::vector<NodeId> out;
    for (int i = 0; i < graph_.n_rows(); ++i)
      if (state_.row_done[i]) out.push_back(NodeId{Side::Row, i});
    for (int j = 0; j < graph_.n_cols(); ++j)
      if (state_.col_done[j]) out.push_back(NodeId{Side::Col, j});
    return out;
  }

  /// Buys one redundant equation for node u's assembled system, chosen by
  /// the same scoring as Stabilize. Returns whether a query was made.
  bool buy_redundant_equation(NodeId u) {
    const std::vector<NodeId> nbrs = computed_neighbors(u);
    const Side opp = u.side == Side::Row ? Side::Col : Side::Row;
    std::vector<char> used(opp == Side::Row ? graph_.n_rows() : graph_.n_cols(),
                           0);
    for (NodeId v : nbrs) used[v.index] = 1;
    const LinearSystem sys = build_system(state_, obs_, u, nbrs);
    if (sys.A.rows() >= rank_ && is_stable(sys)) return false;

    int best = -1;
    double best_score = kInf;
    for (int v : repair_candidates(u, used)) {
      double score;
      if (opts_.instability == InstabilityTest::ConditionNumber) {
        Matrix ext(sys.A.rows() + 1, sys.A.cols());
        ext.topRows(sys.A.rows()) = sys.A;
        ext.row(sys.A.rows()) = factor_row(u, v);
        score = condition_number(ext);
      } else {
        const Position p = entry_position(u, v);
        score = extension_score(sys, factor_row(u, v), sampler_(p.row, p.col));
      }
      if (best == -1 || score < best_score) {
        best_score = score;
        best = v;
      }
    }
    if (best < 0 || best_score == kInf) return false;
    query_entry(u, best);
    return true;
  }

  /// When every system solved square, the reconstruction interpolates all
  /// observations exactly and residuals reveal nothing, noisy or not. A
  /// couple of held-out queries settle it: predict an unobserved entry from
  /// the computed factors and compare with the truth. Skipped when the
  /// initial mask was empty; such runs are pure query-and-factorize and the
  /// minimal query count is the whole point.
  void probe_for_noise() {
    if (initial_observed_ == 0) return;
    double scale_sq = 0.0;
    for (const auto& [pos, value] : obs_.values()) scale_sq += value * value;
    const double scale = std::sqrt(scale_sq / static_cast<double>(obs_.size()));

    int probes = 0;
    for (int i = 0; i < obs_.n_rows() && probes < kNoiseProbes; ++i) {
      if (!state_.row_done[i]) continue;
      for (int j = 0; j < obs_.n_cols() && probes < kNoiseProbes; ++j) {
        if (!state_.col_done[j] || obs_.contains(i, j)) continue;
        if (oracle_->remaining_budget() < 1 || !oracle_->can_query(i, j))
          continue;
        const double predicted = state_.X.row(i).dot(state_.Y.col(j));
        const double value = oracle_->query(i, j);
        obs_.set(i, j, value);
        graph_.add_edge(i, j);
        sampler_.add(i, j, value);
        ++probes;
        if (std::abs(predicted - value) > kNoiseResidualTol * scale)
          noisy_ = true;
      }
    }
  }

  /// The driver's own instability measure of node u's current system: the
  /// local condition number, or kappa for the variant. This is what each
  /// driver believes the noise amplification of the solve to be.
  double instability(NodeId u) const {
    const LinearSystem sys = build_system(state_, obs_, u, computed_neighbors(u));
    if (sys.A.rows() < rank_) return kInf;
    return opts_.instability == InstabilityTest::ConditionNumber
               ? condition_number(sys.A)
               : local_condition(sys);
  }

  /// Once the observations are known noisy, leftover budget buys redundant
  /// equations, worst node first by the driver's instability measure: noise
  /// amplification compounds down the dependency chain, so taming the worst
  /// systems buys the most. One equation per node per wave keeps any single
  /// node from draining the budget.
  void redundancy_pass() {
    std::vector<NodeId> nodes = computed_nodes();
    if (!noisy_) {
      for (NodeId u : nodes) {
        note_noise_evidence(build_system(state_, obs_, u, computed_neighbors(u)));
        if (noisy_) break;
      }
    }
    if (!noisy_) return;
    bool bought = true;
    while (bought && oracle_->remaining_budget() > 0) {
      bought = false;
      std::vector<std::pair<double, NodeId>> ranked;
      for (NodeId u : nodes) ranked.emplace_back(-instability(u), u);
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      for (const auto& [neg, u] : ranked) {
        if (oracle_->remaining_budget() < 1) break;
        bought = buy_redundant_equation(u) || bought;
      }
    }
  }

  /// Alternating re-solves of the recovered rows and columns against every
  /// observed (and queried) entry between them. Consistent systems are fixed
  /// points, so exact-rank recoveries pass through untouched; where equations
  /// outnumber unknowns the sweeps average observation noise out of the
  /// factors. No queries are made.
  void polish_factors() {
    for (int sweep = 0; sweep < 400; ++sweep) {
      double change = 0.0, scale = 0.0;
      auto refit = [&](NodeId u) {
        const std::vector<NodeId> nbrs = computed_neighbors(u);
        if (static_cast<int>(nbrs.size()) < rank_) return;
        LinearSystem sys = build_system(state_, obs_, u, nbrs);
        Vector y;
        try {
          y = solve_least_squares(sys);
        } catch (const RankDeficientError&) {
          return;
        }
        if (u.side == Side::Row) {
          change += (state_.X.row(u.index) - y.transpose()).squaredNorm();
          state_.X.row(u.index) = y.transpose();
        } else {
          change += (state_.Y.col(u.index) - y).squaredNorm();
          state_.Y.col(u.index) = y;
        }
        scale += y.squaredNorm();
      };
      for (int i = 0; i < graph_.n_rows(); ++i)
        if (state_.row_done[i]) refit(NodeId{Side::Row, i});
      for (int j = 0; j < graph_.n_cols(); ++j)
        if (state_.col_done[j]) refit(NodeId{Side::Col, j});
      if (change <= 1e-24 * std::max(scale, 1.0)) break;
    }
  }

  CompletionReport assemble_report(std::vector<NodeId> dead) const {
    const int n1 = obs_.n_rows(), n2 = obs_.n_cols();
    CompletionReport report;
    report.estimate = Matrix::Zero(n1, n2);
    report.recovered.assign(static_cast<std::size_t>(n1) * n2, 0);
    for (int i = 0; i < n1; ++i) {
      if (!state_.row_done[i]) continue;
      for (int j = 0; j < n2; ++j) {
        if (!state_.col_done[j]) continue;
        report.estimate(i, j) = state_.X.row(i).dot(state_.Y.col(j));
        report.recovered[static_cast<std::size_t>(i) * n2 + j] = 1;
      }
    }
    std::sort(dead.begin(), dead.end());
    report.unrecovered_nodes = std::move(dead);
    if (oracle_ != nullptr) {
      report.queries = oracle_->log();
      report.queries_used = static_cast<long>(report.queries.size());
    }
    return report;
  }

  ObservedMatrix obs_;
  MaskGraph graph_;
  int rank_;
  QueryOracle* oracle_;
  CompletionOptions opts_;
  FactorState state_;
  SurrogateSampler sampler_;
  std::vector<char> dead_;
  std::size_t initial_observed_;
  bool noisy_ = false;
  bool affordable_ = false;
};

}  // namespace detail

/// The full active-completion driver: orders the mask graph, seeds the
/// factors, and walks the ordering, repairing incomplete systems and
/// stabilizing unstable ones through budgeted queries to the oracle.
/// Unresolvable nodes are deferred and ultimately left unrecovered, with the
/// corresponding estimate entries zero-filled.
inline CompletionReport order_and_extend(const ObservedMatrix& obs, int r,
                                         QueryOracle& oracle,
                                         const CompletionOptions& opts = {}) {
  detail::CompletionEngine engine(obs, r, &oracle, opts);
  const MaskGraph g = build_mask_graph(obs.mask());
  const Ordering pi =
      adjust_order(g, smallest_last_order(g), r, std::max(1, opts.adjust_passes));
  return engine.run(pi);
}

/// The no-query baseline: same engine, externally supplied ordering, and no
/// oracle, so incomplete or rank-deficient systems are simply deferred.
inline CompletionReport sequential_complete(const ObservedMatrix& obs, int r,
                                            const Ordering& pi,
                                            CompletionOptions opts = {}) {
  opts.theta = kInf;
  opts.instability = InstabilityTest::LocalCondition;
  detail::CompletionEngine engine(obs, r, nullptr, opts);
  return engine.run(pi);
}

/// Driver with the instability test swapped to the classical condition
/// number kappa(A) >= kappa_threshold; exists to compare against the
/// target-aware local condition number.
inline CompletionReport condition_number_variant(const ObservedMatrix& obs,
                                                 int r, double kappa_threshold,
                                                 QueryOracle& oracle,
                                                 CompletionOptions opts = {}) {
  opts.instability = InstabilityTest::ConditionNumber;
  opts.kappa_threshold = kappa_threshold;
  detail::CompletionEngine engine(obs, r, &oracle, opts);
  const MaskGraph g = build_mask_graph(obs.mask());
  const Ordering pi =
      adjust_order(g, smallest_last_order(g), r, std::max(1, opts.adjust_passes));
  return engine.run(pi);
}

}  // namespace amc
