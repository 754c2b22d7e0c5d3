#include "graphmamba/ad/adam.hpp"

#include "graphmamba/errors.hpp"

#include <cmath>

namespace graphmamba::ad {

Parameter::Parameter(std::string n, Tensor t, bool train) : name(std::move(n)), tensor(std::move(t)), trainable(train) {
  if (!tensor.defined()) throw UsageError("parameter '" + name + "' has no tensor");
  if (!tensor.requires_grad()) tensor = Tensor(tensor.shape(), tensor.value(), true);
  tensor.mutable_grad();
  adam.first_moment = Matrix::Zero(tensor.rows(), tensor.cols());
  adam.second_moment = Matrix::Zero(tensor.rows(), tensor.cols());
}

void adam_step(std::span<Parameter> params, const AdamConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw ConfigError("Adam learning rate must be positive");
  for (Parameter& p : params) {
    if (!p.trainable) continue;
    if (!p.tensor.has_grad()) throw StateError("parameter '" + p.name + "' has no gradient");
  }
  for (Parameter& p : params) {
    if (!p.trainable) continue;
    const Matrix& g = p.tensor.grad();
    AdamState& s = p.adam;
    ++s.step;
    s.first_moment = cfg.beta1 * s.first_moment + (1.0 - cfg.beta1) * g;
    s.second_moment = cfg.beta2 * s.second_moment + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.step));
    p.tensor.mutable_value().array() -=
        cfg.lr * (s.first_moment.array() / c1) / ((s.second_moment.array() / c2).sqrt() + cfg.eps);
    p.tensor.zero_grad();
  }
}

void zero_grad(std::span<Parameter> params) {
  for (Parameter& p : params) p.tensor.zero_grad();
}

}  // namespace graphmamba::ad
