#pragma once

#include "graphmamba/ad/ops.hpp"
#include "graphmamba/ad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace testing_support {

using graphmamba::ad::Index;
using graphmamba::ad::Matrix;
using graphmamba::ad::Tensor;

inline Matrix random_matrix(Index r, Index c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

inline Tensor random_tensor(Index r, Index c, std::mt19937_64& rng, bool requires_grad = true, double lo = -1.0,
                            double hi = 1.0) {
  return Tensor::from_matrix(random_matrix(r, c, rng, lo, hi), requires_grad);
}

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Largest relative error between the tape gradient of `loss` with respect to
// each listed input and a central difference with step h.
inline double max_fd_error(std::vector<Tensor> inputs, const std::function<Tensor()>& loss, double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  graphmamba::ad::backward(loss());
  double worst = 0.0;
  for (auto& t : inputs) {
    const Matrix analytic = t.grad();
    for (Index i = 0; i < t.size(); ++i) {
      double& v = t.mutable_value().data()[i];
      const double keep = v;
      double plus, minus;
      {
        graphmamba::ad::NoGradGuard ng;
        v = keep + h;
        plus = loss().item();
        v = keep - h;
        minus = loss().item();
      }
      v = keep;
      worst = std::max(worst, rel_err(analytic.data()[i], (plus - minus) / (2.0 * h)));
    }
  }
  return worst;
}

// Weighted sum of the entries so every output element feeds the loss with a
// distinct factor.
inline Tensor probe_loss(const Tensor& y, const Matrix& weights) {
  return graphmamba::ad::sum(graphmamba::ad::mul(y, Tensor::from_matrix(weights)));
}

}  // namespace testing_support
