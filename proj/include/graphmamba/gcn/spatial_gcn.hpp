#pragma once

#include "graphmamba/ad/tensor.hpp"
#include "graphmamba/gcn/graph.hpp"

#include <random>

namespace graphmamba::gcn {

using ad::Tensor;

enum class Activation { relu, identity };

// One weight matrix shared by every hop, so the parameter count does not depend
// on the number of hops.
struct SpatialGcnParams {
  Tensor w;  // [d_in x d_out]

  static SpatialGcnParams init(Index d_in, Index d_out, std::mt19937_64& rng);
  Index parameter_count() const { return w.size(); }
};

// H = act( sum_{n=0..max_hop} P_n S  W ) with P_0 = I and P_n the propagation
// matrix built from a precomputed filter. The filter is held constant.
Tensor spatial_gcn_forward(const Tensor& s, const HopGraph& graph, const AdaptiveFilter& filter, const Tensor& w,
                           int max_hop, Activation act = Activation::relu);

// sum_{n=0..max_hop} P_n(S) S where P_n is rebuilt from S itself, so gradients
// flow through the adaptive filter as well as through the aggregation.
Tensor adaptive_aggregate(const Tensor& s, const HopGraph& graph, double gamma, int max_hop);

// relu(adaptive_aggregate(S) W): the layer used inside the encoder.
Tensor spatial_gcn_layer(const Tensor& s, const HopGraph& graph, double gamma, const SpatialGcnParams& p, int max_hop);

}  // namespace graphmamba::gcn
