#pragma once

#include "amc/matrix.hpp"

#include <algorithm>
#include <vector>

namespace amc {

enum class Side { Row, Col };

/// A row-node or column-node of the bipartite mask graph. Index is 0-based
/// within its side.
struct NodeId {
  Side side = Side::Row;
  int index = 0;
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

/// Bipartite graph over row-nodes and column-nodes; one edge per observed
/// position.
class MaskGraph {
 public:
  MaskGraph(int n1, int n2) : n1_(n1), n2_(n2), row_adj_(n1), col_adj_(n2) {
    if (n1 <= 0 || n2 <= 0)
      throw std::invalid_argument("MaskGraph: dimensions must be positive");
  }

  int n_rows() const { return n1_; }
  int n_cols() const { return n2_; }
  int n_nodes() const { return n1_ + n2_; }
  long n_edges() const { return n_edges_; }

  bool has_edge(int i, int j) const {
    const auto& a = row_adj_[i];
    return std::binary_search(a.begin(), a.end(), j);
  }

  void add_edge(int i, int j) {
    if (i < 0 || i >= n1_ || j < 0 || j >= n2_)
      throw std::out_of_range("MaskGraph: edge out of bounds");
    if (has_edge(i, j)) throw std::invalid_argument("MaskGraph: duplicate edge");
    row_adj_[i].insert(
        std::lower_bound(row_adj_[i].begin(), row_adj_[i].end(), j), j);
    col_adj_[j].insert(
        std::lower_bound(col_adj_[j].begin(), col_adj_[j].end(), i), i);
    ++n_edges_;
  }

  int degree(NodeId u) const {
    return static_cast<int>(u.side == Side::Row ? row_adj_[u.index].size()
                                                : col_adj_[u.index].size());
  }

  /// Opposite-side neighbor indices, ascending.
  const std::vector<int>& neighbors(NodeId u) const {
    return u.side == Side::Row ? row_adj_[u.index] : col_adj_[u.index];
  }

 private:
  int n1_;
  int n2_;
  long n_edges_ = 0;
  std::vector<std::vector<int>> row_adj_;
  std::vector<std::vector<int>> col_adj_;
};

inline MaskGraph build_mask_graph(const Mask& mask) {
  MaskGraph g(mask.n_rows(), mask.n_cols());
  for (const Position& p : mask.positions()) g.add_edge(p.row, p.col);
  return g;
}

/// A permutation of all row and column nodes with O(1) position lookup.
class Ordering {
 public:
  Ordering(std::vector<NodeId> sequence, int n1, int n2)
      : seq_(std::move(sequence)), n1_(n1), pos_(n1 + n2, -1) {
    if (static_cast<int>(seq_.size()) != n1 + n2)
      throw std::invalid_argument("Ordering: sequence must cover all nodes");
    for (int p = 0; p < static_cast<int>(seq_.size()); ++p) {
      const int k = key(seq_[p]);
      if (pos_[k] != -1)
        throw std::invalid_argument("Ordering: node appears twice");
      pos_[k] = p;
    }
  }

  const std::vector<NodeId>& sequence() const { return seq_; }

  /// 0-based position of u in the permutation.
  int position(NodeId u) const { return pos_[key(u)]; }

  int size() const { return static_cast<int>(seq_.size()); }

 private:
  int key(NodeId u) const {
    return u.side == Side::Row ? u.index : n1_ + u.index;
  }

  std::vector<NodeId> seq_;
  int n1_;
  std::vector<int> pos_;
};

/// Smallest-last ordering: the minimum-degree node of the remaining graph is
/// assigned the last unfilled position and removed, repeatedly. Ties go to
/// Row side before Col side, then lowest index.
inline Ordering smallest_last_order(const MaskGraph& g) {
  const int n1 = g.n_rows(), n2 = g.n_cols(), n = n1 + n2;
  std::vector<int> deg(n);
  std::vector<char> removed(n, 0);
  auto node_of = [&](int k) {
    return k < n1 ? NodeId{Side::Row, k} : NodeId{Side::Col, k - n1};
  };
  for (int k = 0; k < n; ++k) deg[k] = g.degree(node_of(k));

  std::vector<NodeId> seq(n);
  for (int p = n - 1; p >= 0; --p) {
    int best = -1;
    for (int k = 0; k < n; ++k) {
      if (removed[k]) continue;
      if (best == -1 || deg[k] < deg[best]) best = k;
    }
    removed[best] = 1;
    seq[p] = node_of(best);
    for (int v : g.neighbors(seq[p])) {
      const int k = seq[p].side == Side::Row ? n1 + v : v;
      if (!removed[k]) --deg[k];
    }
  }
  return Ordering(std::move(seq), n1, n2);
}

/// Count of neighbors of u that precede u in pi.
inline int implied_indegree(const MaskGraph& g, const Ordering& pi, NodeId u) {
  const int pu = pi.position(u);
  int count = 0;
  for (int v : g.neighbors(u)) {
    const NodeId w{u.side == Side::Row ? Side::Col : Side::Row, v};
    if (pi.position(w) < pu) ++count;
  }
  return count;
}

/// Total indegree shortfall against r, over all nodes except the first r
/// seed positions. Zero means pi is a perfect reconstruction order.
inline long order_deficiency(const MaskGraph& g, const Ordering& pi, int r) {
  long total = 0;
  const auto& seq = pi.sequence();
  for (int p = r; p < static_cast<int>(seq.size()); ++p) {
    const int shortfall = r - implied_indegree(g, pi, seq[p]);
    if (shortfall > 0) total += shortfall;
  }
  return total;
}

/// One repositioning pass over pi: a node of degree <= r moves immediately
/// after its latest-positioned neighbor; a node of degree > r moves
/// immediately after the neighbor with the r-th smallest position. The scan
/// walks positions of the evolving sequence, handling each node at most once.
inline Ordering adjust_order(const MaskGraph& g, const Ordering& pi, int r,
                             int passes = 1) {
  const int n1 = g.n_rows(), n2 = g.n_cols();
  std::vector<NodeId> seq = pi.sequence();
  auto key = [&](NodeId u) {
    return u.side == Side::Row ? u.index : n1 + u.index;
  };

  for (int pass = 0; pass < passes; ++pass) {
    std::vector<int> pos(n1 + n2);
    for (int p = 0; p < static_cast<int>(seq.size()); ++p) pos[key(seq[p])] = p;
    std::vector<char> done(n1 + n2, 0);

    for (int p = 0; p < static_cast<int>(seq.size()); ++p) {
      const NodeId u = seq[p];
      if (done[key(u)]) continue;
      done[key(u)] = 1;

      const auto& nbrs = g.neighbors(u);
      if (nbrs.empty()) continue;  // isolated nodes stay in place

      const Side opp = u.side == Side::Row ? Side::Col : Side::Row;
      NodeId target;
      if (static_cast<int>(nbrs.size()) <= r) {
        // All edges become incoming: place u after the latest neighbor.
        int best_pos = -1;
        for (int v : nbrs) {
          const int pv = pos[key(NodeId{opp, v})];
          if (pv > best_pos) {
            best_pos = pv;
            target = NodeId{opp, v};
          }
        }
      } else {
        // Only r incoming edges are needed; spare edges propagate onward.
        std::vector<int> npos;
        npos.reserve(nbrs.size());
        for (int v : nbrs) npos.push_back(pos[key(NodeId{opp, v})]);
        std::nth_element(npos.begin(), npos.begin() + (r - 1), npos.end());
        target = seq[npos[r - 1]];
      }

      // Canonical placement: immediately after the target, even when the
      // target is earlier than u or u already sits there.
      const int from = pos[key(u)];
      seq.erase(seq.begin() + from);
      int to = pos[key(target)];
      if (to >= from) --to;  // account for the removal shift
      seq.insert(seq.begin() + to + 1, u);
      for (int q = std::min(from, to + 1); q < static_cast<int>(seq.size());
           ++q)
        pos[key(seq[q])] = q;
    }
  }
  return Ordering(std::move(seq), n1, n2);
}

}  // namespace amc
