#pragma once

#include "graphmamba/errors.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cmath>
#include <limits>
#include <vector>

namespace graphmamba::gcn {

using Index = Eigen::Index;
using SparsePattern = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Patch pixels as nodes (row-major), one 0/1 adjacency per hop distance.
// adjacency[n](i, j) = 1 iff the grid shortest-path distance between i and j is
// exactly n; adjacency[0] is the identity.
struct HopGraph {
  Index rows = 0;
  Index cols = 0;
  int max_hop = 0;
  std::vector<SparsePattern> adjacency;
  std::vector<Eigen::VectorXd> degree;
  // neighbors[n][i]: nodes at exact distance n from i, ascending.
  std::vector<std::vector<std::vector<Index>>> neighbors;

  Index node_count() const { return rows * cols; }
};

// 4-neighborhood grid over a rows x cols patch. Hops beyond the grid diameter
// are allowed and come out empty.
HopGraph build_grid_graph(Index rows, Index cols, int max_hop);
inline HopGraph build_grid_graph(Index patch_side, int max_hop) { return build_grid_graph(patch_side, patch_side, max_hop); }

// D^{-1/2} (A [+ I]) D^{-1/2} for a symmetric input. Rows of nodes with zero
// degree stay zero.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> normalize_adjacency(
    const Eigen::MatrixBase<Derived>& a, bool add_self_loops) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (a.rows() != a.cols()) throw ValidationError("normalize_adjacency: matrix is not square");
  if (!(a.derived() == a.derived().transpose())) throw ValidationError("normalize_adjacency: matrix is not symmetric");
  Mat tilde = a;
  if (add_self_loops) tilde += Mat::Identity(a.rows(), a.cols());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> d = tilde.rowwise().sum();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_sqrt(d.size());
  for (Index i = 0; i < d.size(); ++i) {
    using std::sqrt;
    inv_sqrt(i) = d(i) > Scalar(0) ? Scalar(1) / sqrt(d(i)) : Scalar(0);
  }
  return inv_sqrt.asDiagonal() * tilde * inv_sqrt.asDiagonal();
}

inline Eigen::MatrixXd normalize_adjacency(const SparsePattern& a, bool add_self_loops) {
  return normalize_adjacency(Eigen::MatrixXd(a), add_self_loops);
}

// Per-hop Gaussian affinity exp(-gamma ||s_i - s_j||^2), normalized over the
// hop's support of each row. q_per_hop[0] is the identity.
struct AdaptiveFilter {
  std::vector<Eigen::MatrixXd> q_per_hop;
  double gamma = 0.2;
};

template <typename Derived>
AdaptiveFilter adaptive_filter(const Eigen::MatrixBase<Derived>& features, const HopGraph& graph, double gamma) {
  if (!(gamma > 0.0)) throw DomainError("adaptive_filter: gamma must be positive");
  const Index m = graph.node_count();
  if (features.rows() != m) {
    throw DimensionError("adaptive_filter: " + std::to_string(features.rows()) + " feature rows for " +
                         std::to_string(m) + " nodes");
  }
  AdaptiveFilter f;
  f.gamma = gamma;
  f.q_per_hop.push_back(Eigen::MatrixXd::Identity(m, m));
  for (int hop = 1; hop <= graph.max_hop; ++hop) {
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(m, m);
    const auto& nbrs = graph.neighbors[static_cast<std::size_t>(hop)];
    for (Index i = 0; i < m; ++i) {
      const auto& row = nbrs[static_cast<std::size_t>(i)];
      if (row.empty()) continue;
      // Softmax of -gamma * squared distance, shifted by the row maximum.
      double best = -std::numeric_limits<double>::infinity();
      for (Index j : row) {
        const double logit = -gamma * (features.row(i) - features.row(j)).squaredNorm();
        q(i, j) = logit;
        best = std::max(best, logit);
      }
      double total = 0.0;
      for (Index j : row) {
        q(i, j) = std::exp(q(i, j) - best);
        total += q(i, j);
      }
      for (Index j : row) q(i, j) /= total;
    }
    f.q_per_hop.push_back(std::move(q));
  }
  return f;
}

// Hop-n propagation matrix: Q_n masked by the symmetric-normalized A_n, then
// renormalized to be row-stochastic on the hop's support.
Eigen::MatrixXd propagation_matrix(const HopGraph& graph, const AdaptiveFilter& filter, int hop);

}  // namespace graphmamba::gcn
