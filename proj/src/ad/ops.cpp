#include "graphmamba/ad/ops.hpp"

#include "graphmamba/errors.hpp"

#include <cmath>

namespace graphmamba::ad {

namespace {

using Array = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " are not broadcast-compatible");
  }
}

enum class Broadcast { none, scalar_a, scalar_b };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.defined() || !b.defined()) throw UsageError(std::string(op) + ": undefined operand");
  if (a.shape() == b.shape()) return Broadcast::none;
  if (b.size() == 1) return Broadcast::scalar_b;
  if (a.size() == 1) return Broadcast::scalar_a;
  require_same_shape(a, b, op);
  return Broadcast::none;
}


// Unary elementwise op whose derivative is expressible from input and output.
template <typename Forward, typename Derivative>
Tensor unary(const Tensor& a, Forward f, Derivative df) {
  Matrix out = f(a.value().array()).matrix();
  add_flops(static_cast<std::uint64_t>(out.size()));
  return make_result(a.shape(), std::move(out), {a}, [df](Node& self) {
    Node& in = *self.parents[0];
    in.accumulate((self.grad.array() * df(in.value.array(), self.value.array())).matrix());
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() > 2 || b.rank() > 2) throw DimensionError("matmul expects rank <= 2 operands");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul inner extents differ: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Matrix out = a.value() * b.value();
  add_flops(static_cast<std::uint64_t>(2 * a.rows() * a.cols() * b.cols()));
  return make_result(Shape{a.rows(), b.cols()}, std::move(out), {a, b}, [](Node& self) {
    Node& lhs = *self.parents[0];
    Node& rhs = *self.parents[1];
    if (lhs.requires_grad) lhs.accumulate(self.grad * rhs.value.transpose());
    if (rhs.requires_grad) rhs.accumulate(lhs.value.transpose() * self.grad);
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() > 2) throw DimensionError("transpose expects rank <= 2");
  Matrix out = a.value().transpose();
  return make_result(Shape{a.cols(), a.rows()}, std::move(out), {a},
                     [](Node& self) { self.parents[0]->accumulate(self.grad.transpose()); });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("cannot reshape " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  Index cols = shape.empty() ? 1 : shape.back();
  Index rows = cols == 0 ? 0 : a.size() / cols;
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
    Node& in = *self.parents[0];
    in.accumulate(Eigen::Map<const Matrix>(self.grad.data(), in.value.rows(), in.value.cols()));
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  Broadcast kind = broadcast_kind(a, b, "add");
  Matrix out;
  Shape shape;
  switch (kind) {
    case Broadcast::none: out = a.value() + b.value(); shape = a.shape(); break;
    case Broadcast::scalar_b: out = (a.value().array() + b.item()).matrix(); shape = a.shape(); break;
    case Broadcast::scalar_a: out = (b.value().array() + a.item()).matrix(); shape = b.shape(); break;
  }
  add_flops(static_cast<std::uint64_t>(out.size()));
  return make_result(std::move(shape), std::move(out), {a, b}, [kind](Node& self) {
    Node& lhs = *self.parents[0];
    Node& rhs = *self.parents[1];
    auto push = [&](Node& n, bool reduced) {
      if (!n.requires_grad) return;
      if (reduced) n.accumulate(Matrix::Constant(1, 1, self.grad.sum()));
      else n.accumulate(self.grad);
    };
    push(lhs, kind == Broadcast::scalar_a);
    push(rhs, kind == Broadcast::scalar_b);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  Broadcast kind = broadcast_kind(a, b, "mul");
  Matrix out;
  Shape shape;
  switch (kind) {
    case Broadcast::none: out = a.value().cwiseProduct(b.value()); shape = a.shape(); break;
    case Broadcast::scalar_b: out = a.value() * b.item(); shape = a.shape(); break;
    case Broadcast::scalar_a: out = b.value() * a.item(); shape = b.shape(); break;
  }
  add_flops(static_cast<std::uint64_t>(out.size()));
  return make_result(std::move(shape), std::move(out), {a, b}, [kind](Node& self) {
    Node& lhs = *self.parents[0];
    Node& rhs = *self.parents[1];
    switch (kind) {
      case Broadcast::none:
        if (lhs.requires_grad) lhs.accumulate(self.grad.cwiseProduct(rhs.value));
        if (rhs.requires_grad) rhs.accumulate(self.grad.cwiseProduct(lhs.value));
        break;
      case Broadcast::scalar_b:
        if (lhs.requires_grad) lhs.accumulate(self.grad * rhs.value(0, 0));
        if (rhs.requires_grad) rhs.accumulate(Matrix::Constant(1, 1, self.grad.cwiseProduct(lhs.value).sum()));
        break;
      case Broadcast::scalar_a:
        if (lhs.requires_grad) lhs.accumulate(Matrix::Constant(1, 1, self.grad.cwiseProduct(rhs.value).sum()));
        if (rhs.requires_grad) rhs.accumulate(self.grad * lhs.value(0, 0));
        break;
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  Matrix out = a.value() * s;
  add_flops(static_cast<std::uint64_t>(out.size()));
  return make_result(a.shape(), std::move(out), {a}, [s](Node& self) { self.parents[0]->accumulate(self.grad * s); });
}

Tensor add_scalar(const Tensor& a, double s) {
  Matrix out = (a.value().array() + s).matrix();
  add_flops(static_cast<std::uint64_t>(out.size()));
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) { self.parents[0]->accumulate(self.grad); });
}

Tensor relu(const Tensor& a) {
  if (ActivationTrace* trace = active_trace()) {
    const Matrix& v = a.value();
    for (Index i = 0; i < v.size(); ++i) trace->mix(v.data()[i] > 0.0 ? 2 * i + 1 : 2 * i);
  }
  return unary(
      a, [](const auto& x) { return x.max(0.0); },
      [](const auto& x, const auto&) { return (x > 0.0).template cast<double>(); });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, [](const auto& x) { return 1.0 / (1.0 + (-x).exp()); },
      [](const auto&, const auto& y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](const auto& x) { return x.exp(); }, [](const auto&, const auto& y) { return y; });
}

Tensor softplus(const Tensor& a) {
  // log(1 + e^x) = max(x, 0) + log1p(e^{-|x|}), with log1p(y) written as
  // log(u) - (u - 1 - y) / u, u = 1 + y, so that it vectorizes.
  return unary(
      a,
      [](const auto& x) {
        const Array y = (-x.abs()).exp();
        const Array u = 1.0 + y;
        return Array(x.max(0.0) + u.log() - ((u - 1.0) - y) / u);
      },
      [](const auto& x, const auto&) { return 1.0 / (1.0 + (-x).exp()); });
}

Tensor softmax(const Tensor& a) {
  if (a.rank() > 2) throw DimensionError("softmax expects rank <= 2");
  Array x = a.value().array();
  Eigen::VectorXd mx = x.rowwise().maxCoeff();
  Array e = (x.colwise() - mx.array()).exp();
  Eigen::VectorXd denom = e.rowwise().sum();
  Matrix out = (e.colwise() / denom.array()).matrix();
  add_flops(static_cast<std::uint64_t>(3 * out.size()));
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    Eigen::VectorXd dot = self.grad.cwiseProduct(self.value).rowwise().sum();
    Array g = self.value.array() * (self.grad.array().colwise() - dot.array());
    self.parents[0]->accumulate(g.matrix());
  });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b, double s) {
  switch (op) {
    case ElementwiseOp::add: return add(a, b);
    case ElementwiseOp::mul: return mul(a, b);
    case ElementwiseOp::sub: return sub(a, b);
    case ElementwiseOp::scale: return scale(a, s);
    case ElementwiseOp::relu: return relu(a);
    case ElementwiseOp::sigmoid: return sigmoid(a);
    case ElementwiseOp::exp: return exp(a);
    case ElementwiseOp::softmax: return softmax(a);
  }
  throw UsageError("unknown elementwise op");
}

Tensor sum(const Tensor& a) {
  Matrix out = Matrix::Constant(1, 1, a.value().sum());
  add_flops(static_cast<std::uint64_t>(a.size()));
  return make_result(Shape{}, std::move(out), {a}, [](Node& self) {
    Node& in = *self.parents[0];
    in.accumulate(Matrix::Constant(in.value.rows(), in.value.cols(), self.grad(0, 0)));
  });
}

Tensor mean_rows(const Tensor& a) {
  if (a.rank() > 2) throw DimensionError("mean_rows expects rank <= 2");
  if (a.rows() == 0) throw DimensionError("mean_rows over zero rows");
  Matrix out = a.value().colwise().mean();
  add_flops(static_cast<std::uint64_t>(a.size()));
  return make_result(Shape{1, a.cols()}, std::move(out), {a}, [](Node& self) {
    Node& in = *self.parents[0];
    const double inv = 1.0 / static_cast<double>(in.value.rows());
    in.accumulate((self.grad * inv).replicate(in.value.rows(), 1));
  });
}

Tensor repeat_rows(const Tensor& r, Index n) {
  if (r.rows() != 1) throw DimensionError("repeat_rows expects a single row, got " + shape_string(r.shape()));
  Matrix out = r.value().replicate(n, 1);
  return make_result(Shape{n, r.cols()}, std::move(out), {r},
                     [](Node& self) { self.parents[0]->accumulate(self.grad.colwise().sum()); });
}

Tensor row(const Tensor& a, Index i) {
  if (a.rank() != 2 || i < 0 || i >= a.rows()) {
    throw DimensionError("row " + std::to_string(i) + " out of range for " + shape_string(a.shape()));
  }
  Matrix out = a.value().row(i);
  return make_result(Shape{1, a.cols()}, std::move(out), {a}, [i](Node& self) {
    Node& in = *self.parents[0];
    in.ensure_grad().row(i) += self.grad.row(0);
  });
}

Tensor layer_norm_rows(const Tensor& a, double eps) {
  if (a.rank() > 2) throw DimensionError("layer_norm_rows expects rank <= 2");
  const Index c = a.cols();
  Eigen::VectorXd mean = a.value().rowwise().mean();
  Matrix centered = a.value().colwise() - mean;
  Eigen::VectorXd inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<double>(c)) + eps).rsqrt().matrix();
  Matrix out = inv_std.asDiagonal() * centered;
  add_flops(static_cast<std::uint64_t>(5 * a.size()));
  return make_result(a.shape(), out, {a}, [inv_std, c](Node& self) {
    const Matrix& y = self.value;
    const Matrix& g = self.grad;
    Eigen::VectorXd g_mean = g.rowwise().mean();
    Eigen::VectorXd gy_mean = g.cwiseProduct(y).rowwise().sum() / static_cast<double>(c);
    Matrix dx = g.colwise() - g_mean;
    dx -= gy_mean.asDiagonal() * y;
    self.parents[0]->accumulate(inv_std.asDiagonal() * dx);
  });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel) {
  if (input.rank() != 2 || kernel.rank() != 2) throw DimensionError("conv2d expects rank-2 input and kernel");
  const Index kh = kernel.rows(), kw = kernel.cols();
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ConfigError("conv2d kernel extents must be odd, got " + shape_string(kernel.shape()));
  }
  const Index h = input.rows(), w = input.cols();
  const Index ph = kh / 2, pw = kw / 2;
  const Matrix& x = input.value();
  const Matrix& k = kernel.value();
  Matrix out = Matrix::Zero(h, w);
  for (Index u = 0; u < kh; ++u) {
    for (Index v = 0; v < kw; ++v) {
      const double kv = k(u, v);
      if (kv == 0.0) continue;
      // out[i][j] += k[u][v] * x[i+u-ph][j+v-pw] over the valid overlap
      const Index di = u - ph, dj = v - pw;
      const Index i0 = std::max<Index>(0, -di), i1 = std::min(h, h - di);
      const Index j0 = std::max<Index>(0, -dj), j1 = std::min(w, w - dj);
      if (i1 <= i0 || j1 <= j0) continue;
      out.block(i0, j0, i1 - i0, j1 - j0) += kv * x.block(i0 + di, j0 + dj, i1 - i0, j1 - j0);
    }
  }
  add_flops(static_cast<std::uint64_t>(2 * h * w * kh * kw));
  return make_result(Shape{h, w}, std::move(out), {input, kernel}, [ph, pw](Node& self) {
    Node& in = *self.parents[0];
    Node& ker = *self.parents[1];
    const Index h = in.value.rows(), w = in.value.cols();
    const Index kh = ker.value.rows(), kw = ker.value.cols();
    const Matrix& g = self.grad;
    Matrix* din = in.requires_grad ? &in.ensure_grad() : nullptr;
    Matrix* dk = ker.requires_grad ? &ker.ensure_grad() : nullptr;
    for (Index u = 0; u < kh; ++u) {
      for (Index v = 0; v < kw; ++v) {
        const Index di = u - ph, dj = v - pw;
        const Index i0 = std::max<Index>(0, -di), i1 = std::min(h, h - di);
        const Index j0 = std::max<Index>(0, -dj), j1 = std::min(w, w - dj);
        if (i1 <= i0 || j1 <= j0) continue;
        auto gblk = g.block(i0, j0, i1 - i0, j1 - j0);
        if (din) din->block(i0 + di, j0 + dj, i1 - i0, j1 - j0) += ker.value(u, v) * gblk;
        if (dk) (*dk)(u, v) += gblk.cwiseProduct(in.value.block(i0 + di, j0 + dj, i1 - i0, j1 - j0)).sum();
      }
    }
  });
}

Tensor cross_entropy(const Tensor& logits, Index label) {
  if (logits.rows() != 1) throw DimensionError("cross_entropy expects a single row of logits");
  if (label < 0 || label >= logits.cols()) {
    throw UsageError("label " + std::to_string(label) + " outside [0, " + std::to_string(logits.cols()) + ")");
  }
  const auto z = logits.value().row(0).array();
  const double mx = z.maxCoeff();
  const double lse = mx + std::log((z - mx).exp().sum());
  Matrix out = Matrix::Constant(1, 1, lse - z(label));
  add_flops(static_cast<std::uint64_t>(3 * logits.size()));
  return make_result(Shape{}, std::move(out), {logits}, [label, lse](Node& self) {
    Node& in = *self.parents[0];
    Matrix p = (in.value.array() - lse).exp().matrix();
    p(0, label) -= 1.0;
    in.accumulate(p * self.grad(0, 0));
  });
}

Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
  if (rate == 0.0) return a;
  const double keep = 1.0 - rate;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix mask(a.rows(), a.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = unif(rng) < keep ? 1.0 / keep : 0.0;
  Matrix out = a.value().cwiseProduct(mask);
  return make_result(a.shape(), std::move(out), {a},
                     [mask = std::move(mask)](Node& self) { self.parents[0]->accumulate(self.grad.cwiseProduct(mask)); });
}

}  // namespace graphmamba::ad
