#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace graphmamba::ad {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Shape = std::vector<Index>;

Index shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// One vertex of the differentiation tape. Values are stored as a row-major
// matrix whose column count is the last extent and whose row count is the
// product of the leading extents; rank-0 and rank-1 tensors are a single row.
struct Node {
  Shape shape;
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return parents.empty(); }
  Matrix& ensure_grad();
  void accumulate(const Matrix& g);
};

class Tensor {
 public:
  Tensor() = default;
  // Throws DataError on non-finite input and DimensionError on a size/shape mismatch.
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
  Tensor(Shape shape, Matrix value, bool requires_grad = false);

  static Tensor from_matrix(Matrix value, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index size() const { return node_->value.size(); }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }

  const Matrix& value() const { return node_->value; }
  // Direct access for optimizers and finite-difference probes. Never mutate a
  // tensor that is part of a live graph awaiting backward.
  Matrix& mutable_value() { return node_->value; }
  std::span<const double> data() const { return {node_->value.data(), static_cast<std::size_t>(size())}; }
  double item() const;
  double operator()(Index r, Index c) const { return node_->value(r, c); }

  bool requires_grad() const { return node_->requires_grad; }
  bool on_tape() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size() && node_->grad.size() > 0; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();
  void release_grad() { node_->grad.resize(0, 0); }

  // Same value, no history.
  Tensor detach() const;
  // Deep copy of value (and grad flag); the result is an independent leaf.
  Tensor clone() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;

  friend Tensor make_result(Shape, Matrix, std::vector<Tensor>, std::function<void(Node&)>);
};

// Builds an op result. The backward closure and parent links are recorded only
// when gradient recording is enabled and some input requires a gradient.
Tensor make_result(Shape shape, Matrix value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward);

// Reverse sweep from a scalar loss. Leaf gradients accumulate; intermediate
// gradients are released after use. A detached loss is a no-op.
void backward(const Tensor& loss);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Approximate floating-point operation counter, per thread.
std::uint64_t flop_count();
void add_flops(std::uint64_t n);
void reset_flops();

// Relu activation-pattern fingerprint, per thread. Finite-difference probes use
// it to detect when a perturbation crosses a kink.
class ActivationTrace {
 public:
  ActivationTrace();
  ~ActivationTrace();
  ActivationTrace(const ActivationTrace&) = delete;
  ActivationTrace& operator=(const ActivationTrace&) = delete;
  std::uint64_t fingerprint() const { return hash_; }
  void mix(std::uint64_t v);

 private:
  ActivationTrace* previous_;
  std::uint64_t hash_ = 0x9e3779b97f4a7c15ULL;
};
ActivationTrace* active_trace();

}  // namespace graphmamba::ad
