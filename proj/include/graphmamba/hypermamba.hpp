#pragma once

#include "graphmamba/ad/tensor.hpp"
#include "graphmamba/ssm/selective.hpp"

#include <random>

namespace graphmamba::hypermamba {

using ad::Tensor;
using Index = Eigen::Index;

// Spectral mixing mask. Two learnable profiles reweight the token-mean spectrum,
// their outer product is convolved with a 3x3 kernel, and the resulting D x D
// matrix mixes the feature dimension of every token.
struct GlobalMaskParams {
  Tensor w_r;     // [1 x D]
  Tensor w_c;     // [1 x D]
  Tensor kernel;  // [3 x 3]

  static GlobalMaskParams init(Index d);
};

// Learnable convex residual weight, epsilon = sigmoid(epsilon_raw).
struct AutoResState {
  Tensor epsilon_raw;  // scalar

  double epsilon() const;
  static AutoResState init(double raw = 0.0);
};

struct BlockParams {
  Tensor norm_gain;  // [1 x C]
  Tensor norm_bias;  // [1 x C]
  GlobalMaskParams mask;
  ssm::SsmParams ssm;
  Tensor w_gate;  // [C x C]
  Tensor b_gate;  // [1 x C]
  AutoResState auto_res;

  static BlockParams init(Index channels, Index state, std::mt19937_64& rng);
};

struct BlockOptions {
  bool use_global_mask = true;
  unsigned scan_workers = 1;
};

// The D x D mask built from S; exposed for inspection and tests.
Tensor global_mask_matrix(const Tensor& s, const GlobalMaskParams& p);
// S M^T with M = conv3x3(r c^T), r = w_r * mean_rows(S), c = w_c * mean_rows(S).
Tensor global_mask(const Tensor& s, const GlobalMaskParams& p);

// epsilon * m_l + (1 - epsilon) * m_prev.
Tensor auto_res(const Tensor& m_l, const Tensor& m_prev, const AutoResState& s);

// layer norm -> global mask -> selective SSM -> sigmoid gate -> AutoRes(m_prev).
Tensor hypermamba_block(const Tensor& m_l, const Tensor& m_prev, const BlockParams& p, const BlockOptions& opt = {});

}  // namespace graphmamba::hypermamba
