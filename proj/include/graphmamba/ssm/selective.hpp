#pragma once

#include "graphmamba/ad/tensor.hpp"

#include <random>

namespace graphmamba::ssm {

using ad::Tensor;

// Per-layer selective state-space parameters. The diagonal state matrix is
// stored through its log magnitude, A = -exp(a_log), so every entry stays
// strictly negative under any update.
struct SsmParams {
  Tensor a_log;    // [channels x state]
  Tensor w_delta;  // [channels x channels]
  Tensor b_delta;  // [1 x channels]
  Tensor w_b;      // [channels x state]
  Tensor w_c;      // [channels x state]

  Eigen::Index channel_dim() const { return w_delta.rows(); }
  Eigen::Index state_dim() const { return a_log.cols(); }

  // A = -(1 + s) for state index s, fan-in uniform projections, and a delta bias
  // whose softplus lands in [1e-3, 1e-1].
  static SsmParams init(Eigen::Index channels, Eigen::Index state, std::mt19937_64& rng);
};

Tensor state_matrix(const SsmParams& p);

struct Selection {
  Tensor delta;  // [n x channels], strictly positive
  Tensor b;      // [n x state]
  Tensor c;      // [n x state]
};

// delta = softplus(x W_delta + b_delta), B = x W_B, C = x W_C for every row of x.
Selection selective_project(const Tensor& tokens, const SsmParams& p);

// Differentiable selective scan. For each token k, channel c and state s:
//   h[k,c,s] = exp(delta[k,c] A[c,s]) h[k-1,c,s] + gain(A[c,s], delta[k,c]) B[k,s] x[k,c]
//   y[k,c]   = sum_s C[k,s] h[k,c,s]
// with h[-1] = 0. With workers > 1 the forward pass uses the parallel tree
// scan, otherwise the plain recurrence; the backward pass runs the reverse
// recurrence sequentially.
Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& b, const Tensor& c,
                      unsigned workers = 1);

// Projections followed by the scan; tokens are [n x channels].
Tensor ssm_forward(const Tensor& tokens, const SsmParams& p, unsigned workers = 1);

}  // namespace graphmamba::ssm
