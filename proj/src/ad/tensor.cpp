#include "graphmamba/ad/tensor.hpp"

#include "graphmamba/errors.hpp"

#include <sstream>
#include <unordered_set>

namespace graphmamba::ad {

namespace {

thread_local bool t_grad_enabled = true;
thread_local std::uint64_t t_flops = 0;
thread_local ActivationTrace* t_trace = nullptr;

std::pair<Index, Index> matrix_extents(const Shape& shape) {
  if (shape.empty()) return {1, 1};
  Index rows = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) rows *= shape[i];
  return {rows, shape.back()};
}

void check_extents(const Shape& shape) {
  for (Index e : shape) {
    if (e < 0) throw DimensionError("negative extent in shape " + shape_string(shape));
  }
}

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw DataError(std::string("non-finite value in ") + what);
}

}  // namespace

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Matrix& Node::ensure_grad() {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }
  return grad;
}

void Node::accumulate(const Matrix& g) { ensure_grad() += g; }

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  check_extents(shape);
  if (shape_size(shape) != static_cast<Index>(data.size())) {
    throw DimensionError("shape " + shape_string(shape) + " holds " + std::to_string(shape_size(shape)) +
                         " values, got " + std::to_string(data.size()));
  }
  auto [r, c] = matrix_extents(shape);
  Matrix value = Eigen::Map<const Matrix>(data.data(), r, c);
  check_finite(value, "tensor construction");
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, Matrix value, bool requires_grad) {
  check_extents(shape);
  auto [r, c] = matrix_extents(shape);
  if (value.size() != shape_size(shape)) {
    throw DimensionError("shape " + shape_string(shape) + " does not match a " + std::to_string(value.rows()) +
                         "x" + std::to_string(value.cols()) + " buffer");
  }
  if (value.rows() != r || value.cols() != c) value = Eigen::Map<Matrix>(value.data(), r, c).eval();
  check_finite(value, "tensor construction");
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::from_matrix(Matrix value, bool requires_grad) {
  Shape shape{value.rows(), value.cols()};
  return Tensor(std::move(shape), std::move(value), requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_extents(shape);
  auto [r, c] = matrix_extents(shape);
  return Tensor(std::move(shape), Matrix::Zero(r, c), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return Tensor(Shape{}, std::vector<double>{v}, requires_grad); }

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return node_->value(0, 0);
}

void Tensor::zero_grad() {
  if (node_->grad.size() > 0) node_->grad.setZero();
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<Node>();
  n->shape = node_->shape;
  n->value = node_->value;
  return Tensor(std::move(n));
}

Tensor Tensor::clone() const {
  auto n = std::make_shared<Node>();
  n->shape = node_->shape;
  n->value = node_->value;
  n->requires_grad = node_->requires_grad;
  if (n->requires_grad) n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
  return Tensor(std::move(n));
}

Tensor make_result(Shape shape, Matrix value, std::vector<Tensor> inputs, std::function<void(Node&)> backward) {
#ifndef NDEBUG
  check_finite(value, "op result");
#endif
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (t_grad_enabled) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) {
        n->requires_grad = true;
        break;
      }
    }
  }
  if (n->requires_grad) {
    n->parents.reserve(inputs.size());
    for (auto& in : inputs) n->parents.push_back(in.node());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw UsageError("backward requires a scalar loss, got shape " +
                     (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order without recursion depth limits.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->is_leaf()) continue;
    if (node->backward && node->grad.size() > 0) node->backward(*node);
    node->grad.resize(0, 0);
  }
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

std::uint64_t flop_count() { return t_flops; }
void add_flops(std::uint64_t n) { t_flops += n; }
void reset_flops() { t_flops = 0; }

ActivationTrace::ActivationTrace() : previous_(t_trace) { t_trace = this; }
ActivationTrace::~ActivationTrace() { t_trace = previous_; }
void ActivationTrace::mix(std::uint64_t v) {
  hash_ ^= v + 0x9e3779b97f4a7c15ULL + (hash_ << 6) + (hash_ >> 2);
}
ActivationTrace* active_trace() { return t_trace; }

}  // namespace graphmamba::ad
