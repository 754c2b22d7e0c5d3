#pragma once

#include "graphmamba/ad/tensor.hpp"

#include <random>

namespace graphmamba::ad {

// Matrix product of two rank-2 tensors (rank-1 operands are treated as a row).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// Elementwise binary ops. Operands must have identical shapes, or one of them
// must hold a single element (scalar broadcast). Nothing else broadcasts.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor softplus(const Tensor& a);
// Row-wise softmax over the last dimension.
Tensor softmax(const Tensor& a);

enum class ElementwiseOp { add, mul, sub, scale, relu, sigmoid, exp, softmax };
// Dispatch form of the ops above; `b` is ignored for unary ops and `s` is the
// factor for `scale`.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b = {}, double s = 1.0);

Tensor sum(const Tensor& a);
// Column means over rows: [n x c] -> [1 x c].
Tensor mean_rows(const Tensor& a);
// Explicit row broadcast: [1 x c] -> [n x c].
Tensor repeat_rows(const Tensor& row, Index n);
// Single row i of a rank-2 tensor as a [1 x c] tensor.
Tensor row(const Tensor& a, Index i);

// Per-row standardization to zero mean / unit variance, no affine part.
Tensor layer_norm_rows(const Tensor& a, double eps = 1e-5);

// Same-size 2-D cross-correlation with zero padding and no bias. Both kernel
// extents must be odd.
Tensor conv2d(const Tensor& input, const Tensor& kernel);

// -log softmax(logits)[label] for a single row of logits.
Tensor cross_entropy(const Tensor& logits, Index label);

// Inverted dropout with keep-probability 1 - rate.
Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng);

}  // namespace graphmamba::ad
