#include "graphmamba/gcn/spatial_gcn.hpp"

#include "graphmamba/ad/ops.hpp"

#include <cmath>
#include <limits>

namespace graphmamba::gcn {

using ad::Matrix;

namespace {

void check_hops(const HopGraph& graph, int max_hop) {
  if (max_hop < 0) throw ConfigError("max_hop must be non-negative");
  if (max_hop > graph.max_hop) {
    throw ValidationError("requested " + std::to_string(max_hop) + " hops but graph holds " +
                          std::to_string(graph.max_hop));
  }
}

struct Edge {
  Index i;
  Index j;
  double p;
};

}  // namespace

SpatialGcnParams SpatialGcnParams::init(Index d_in, Index d_out, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0 / std::sqrt(static_cast<double>(d_in)),
                                           1.0 / std::sqrt(static_cast<double>(d_in)));
  Matrix w(d_in, d_out);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  return {Tensor::from_matrix(std::move(w), true)};
}

Tensor spatial_gcn_forward(const Tensor& s, const HopGraph& graph, const AdaptiveFilter& filter, const Tensor& w,
                           int max_hop, Activation act) {
  check_hops(graph, max_hop);
  if (static_cast<int>(filter.q_per_hop.size()) != graph.max_hop + 1) {
    throw ValidationError("filter covers " + std::to_string(filter.q_per_hop.size()) + " hops, graph has " +
                          std::to_string(graph.max_hop + 1));
  }
  for (const auto& q : filter.q_per_hop) {
    if (q.rows() != graph.node_count() || q.cols() != graph.node_count()) {
      throw ValidationError("filter matrix size does not match graph node count");
    }
  }
  if (s.rows() != graph.node_count()) {
    throw DimensionError("spatial_gcn_forward: " + std::to_string(s.rows()) + " feature rows for " +
                         std::to_string(graph.node_count()) + " nodes");
  }
  const Index m = graph.node_count();
  Matrix total = Matrix::Identity(m, m);
  for (int hop = 1; hop <= max_hop; ++hop) total += propagation_matrix(graph, filter, hop);
  Tensor agg = ad::matmul(Tensor::from_matrix(std::move(total)), s);
  Tensor pre = ad::matmul(agg, w);
  return act == Activation::relu ? ad::relu(pre) : pre;
}

Tensor adaptive_aggregate(const Tensor& s, const HopGraph& graph, double gamma, int max_hop) {
  check_hops(graph, max_hop);
  if (!(gamma > 0.0)) throw DomainError("adaptive_aggregate: gamma must be positive");
  const Index m = graph.node_count();
  if (s.rows() != m) {
    throw DimensionError("adaptive_aggregate: " + std::to_string(s.rows()) + " feature rows for " +
                         std::to_string(m) + " nodes");
  }
  const Matrix& x = s.value();
  Matrix out = x;
  std::vector<std::vector<Edge>> edges(static_cast<std::size_t>(max_hop) + 1);
  std::vector<Matrix> hop_agg(static_cast<std::size_t>(max_hop) + 1);
  std::vector<double> logits;
  std::uint64_t flops = 0;
  for (int hop = 1; hop <= max_hop; ++hop) {
    const auto h = static_cast<std::size_t>(hop);
    const auto& nbrs = graph.neighbors[h];
    const Eigen::VectorXd& deg = graph.degree[h];
    Matrix agg = Matrix::Zero(m, x.cols());
    for (Index i = 0; i < m; ++i) {
      const auto& row = nbrs[static_cast<std::size_t>(i)];
      if (row.empty()) continue;
      logits.resize(row.size());
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < row.size(); ++t) {
        const Index j = row[t];
        // Gaussian affinity times the 1/sqrt(d_j) factor of D^{-1/2} A D^{-1/2};
        // the 1/sqrt(d_i) factor cancels under row normalization.
        logits[t] = -gamma * (x.row(i) - x.row(j)).squaredNorm() - 0.5 * std::log(deg(j));
        best = std::max(best, logits[t]);
      }
      double total = 0.0;
      for (double& l : logits) total += (l = std::exp(l - best));
      for (std::size_t t = 0; t < row.size(); ++t) {
        const double p = logits[t] / total;
        edges[h].push_back({i, row[t], p});
        agg.row(i) += p * x.row(row[t]);
      }
      flops += static_cast<std::uint64_t>(row.size() * (5 * x.cols() + 4));
    }
    out += agg;
    hop_agg[h] = std::move(agg);
  }
  ad::add_flops(flops + static_cast<std::uint64_t>(out.size()));

  return ad::make_result(
      s.shape(), std::move(out), {s},
      [edges = std::move(edges), hop_agg = std::move(hop_agg), gamma](ad::Node& self) {
        ad::Node& in = *self.parents[0];
        const Matrix& x = in.value;
        const Matrix& g = self.grad;
        Matrix dx = g;
        for (std::size_t h = 1; h < edges.size(); ++h) {
          for (const Edge& e : edges[h]) {
            // aggregation path
            dx.row(e.j) += e.p * g.row(e.i);
            // filter path: d logit_ij = P_ij (g_i . s_j - g_i . agg_i)
            const double dlogit = e.p * (g.row(e.i).dot(x.row(e.j)) - g.row(e.i).dot(hop_agg[h].row(e.i)));
            if (dlogit == 0.0) continue;
            const Eigen::RowVectorXd diff = x.row(e.i) - x.row(e.j);
            dx.row(e.i) -= (2.0 * gamma * dlogit) * diff;
            dx.row(e.j) += (2.0 * gamma * dlogit) * diff;
          }
        }
        in.accumulate(dx);
      });
}

Tensor spatial_gcn_layer(const Tensor& s, const HopGraph& graph, double gamma, const SpatialGcnParams& p, int max_hop) {
  Tensor agg = max_hop == 0 ? s : adaptive_aggregate(s, graph, gamma, max_hop);
  return ad::relu(ad::matmul(agg, p.w));
}

}  // namespace graphmamba::gcn
