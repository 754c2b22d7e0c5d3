#pragma once

#include "graphmamba/ad/adam.hpp"
#include "graphmamba/core/model.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace graphmamba::core {

struct GradCheckOptions {
  double h = 1e-5;
  double tolerance = 1e-4;
  // Relative errors are taken against max(|analytic|, |numeric|, floor).
  double floor = 1e-6;
  // A probe that flips a relu is retried with h / 10, at most this many times.
  int max_shrinks = 3;
};

struct GradCheckEntry {
  std::string param;
  Index index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  Index checked = 0;
  Index shrunk = 0;
  double max_rel_err = 0.0;
  GradCheckEntry worst;
  std::vector<GradCheckEntry> failures;

  bool passed() const { return failures.empty(); }
};

// Central differences on every element of every trainable parameter.
GradCheckReport check_gradients(std::span<ad::Parameter> params, const std::function<ad::Tensor()>& loss,
                                const GradCheckOptions& opt = {});

// Builds the model, perturbs every parameter away from its initial values so no
// path is dead (zero-initialized projections included), and checks the
// cross-entropy loss of one random patch with dropout off.
GradCheckReport check_model_gradients(const ModelConfig& cfg, const GradCheckOptions& opt = {});

}  // namespace graphmamba::core
