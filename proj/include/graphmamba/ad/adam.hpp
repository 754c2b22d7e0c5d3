#pragma once

#include "graphmamba/ad/tensor.hpp"

#include <span>
#include <string>

namespace graphmamba::ad {

struct AdamState {
  Matrix first_moment;
  Matrix second_moment;
  long step = 0;
};

// A named trainable tensor plus its optimizer state. The tensor is a leaf with
// a zero gradient buffer allocated up front, so parameters that a loss never
// reaches still report a (zero) gradient.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor tensor, bool trainable = true);

  std::string name;
  Tensor tensor;
  bool trainable = true;
  AdamState adam;
};

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update on every trainable parameter, then zeroes the
// gradients. Throws StateError when a trainable parameter has no gradient buffer.
void adam_step(std::span<Parameter> params, const AdamConfig& cfg);

void zero_grad(std::span<Parameter> params);

}  // namespace graphmamba::ad
