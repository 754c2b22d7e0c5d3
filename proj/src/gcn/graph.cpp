#include "graphmamba/gcn/graph.hpp"

#include <cstdlib>

namespace graphmamba::gcn {

HopGraph build_grid_graph(Index rows, Index cols, int max_hop) {
  if (rows < 1 || cols < 1) throw ConfigError("grid graph needs at least one row and column");
  if (max_hop < 0) throw ConfigError("max_hop must be non-negative");
  HopGraph g;
  g.rows = rows;
  g.cols = cols;
  g.max_hop = max_hop;
  const Index m = rows * cols;
  const auto hops = static_cast<std::size_t>(max_hop) + 1;
  g.neighbors.assign(hops, std::vector<std::vector<Index>>(static_cast<std::size_t>(m)));

  // On a full 4-connected grid the shortest path is the Manhattan distance.
  for (Index i = 0; i < m; ++i) {
    const Index ri = i / cols, ci = i % cols;
    for (Index j = 0; j < m; ++j) {
      const Index d = std::abs(ri - j / cols) + std::abs(ci - j % cols);
      if (d <= max_hop) g.neighbors[static_cast<std::size_t>(d)][static_cast<std::size_t>(i)].push_back(j);
    }
  }

  for (std::size_t hop = 0; hop < hops; ++hop) {
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::VectorXd deg = Eigen::VectorXd::Zero(m);
    for (Index i = 0; i < m; ++i) {
      for (Index j : g.neighbors[hop][static_cast<std::size_t>(i)]) trips.emplace_back(i, j, 1.0);
      deg(i) = static_cast<double>(g.neighbors[hop][static_cast<std::size_t>(i)].size());
    }
    SparsePattern a(m, m);
    a.setFromTriplets(trips.begin(), trips.end());
    g.adjacency.push_back(std::move(a));
    g.degree.push_back(std::move(deg));
  }
  return g;
}

Eigen::MatrixXd propagation_matrix(const HopGraph& graph, const AdaptiveFilter& filter, int hop) {
  if (hop < 0 || hop > graph.max_hop || hop >= static_cast<int>(filter.q_per_hop.size())) {
    throw ValidationError("propagation_matrix: hop " + std::to_string(hop) + " not covered by graph and filter");
  }
  const Index m = graph.node_count();
  if (hop == 0) return filter.q_per_hop[0];
  const Eigen::MatrixXd norm = normalize_adjacency(graph.adjacency[static_cast<std::size_t>(hop)], false);
  Eigen::MatrixXd p = filter.q_per_hop[static_cast<std::size_t>(hop)].cwiseProduct(norm);
  for (Index i = 0; i < m; ++i) {
    const double s = p.row(i).sum();
    if (s > 0.0) p.row(i) /= s;
  }
  return p;
}

}  // namespace graphmamba::gcn
