#include "graphmamba/hypermamba.hpp"

#include "graphmamba/ad/ops.hpp"
#include "graphmamba/errors.hpp"

#include <cmath>

namespace graphmamba::hypermamba {

using ad::Matrix;

GlobalMaskParams GlobalMaskParams::init(Index d) {
  if (d < 1) throw ConfigError("global mask needs a feature dimension of at least 1");
  // w_r = w_c = d^{-1/2} keeps S M^T at the scale of S for unit-variance tokens.
  const double v = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix kernel = Matrix::Zero(3, 3);
  kernel(1, 1) = 1.0;
  return {Tensor::from_matrix(Matrix::Constant(1, d, v), true), Tensor::from_matrix(Matrix::Constant(1, d, v), true),
          Tensor::from_matrix(std::move(kernel), true)};
}

double AutoResState::epsilon() const {
  ad::NoGradGuard no_grad;
  return ad::sigmoid(epsilon_raw).item();
}

AutoResState AutoResState::init(double raw) { return {Tensor::scalar(raw, true)}; }

BlockParams BlockParams::init(Index channels, Index state, std::mt19937_64& rng) {
  BlockParams p;
  p.norm_gain = Tensor::from_matrix(Matrix::Ones(1, channels), true);
  p.norm_bias = Tensor::from_matrix(Matrix::Zero(1, channels), true);
  p.mask = GlobalMaskParams::init(channels);
  p.ssm = ssm::SsmParams::init(channels, state, rng);
  std::uniform_real_distribution<double> u(-1.0 / std::sqrt(static_cast<double>(channels)),
                                           1.0 / std::sqrt(static_cast<double>(channels)));
  Matrix wg(channels, channels);
  for (Index i = 0; i < wg.size(); ++i) wg.data()[i] = u(rng);
  p.w_gate = Tensor::from_matrix(std::move(wg), true);
  p.b_gate = Tensor::from_matrix(Matrix::Zero(1, channels), true);
  p.auto_res = AutoResState::init();
  return p;
}

Tensor global_mask_matrix(const Tensor& s, const GlobalMaskParams& p) {
  if (s.rank() != 2) throw DimensionError("global_mask expects [tokens x D] input");
  const Index d = s.cols();
  if (d == 0) throw ConfigError("global_mask: feature dimension is zero");
  if (p.w_r.size() != d || p.w_c.size() != d) {
    throw DimensionError("global_mask: projection length does not match D=" + std::to_string(d));
  }
  if (p.kernel.rows() != 3 || p.kernel.cols() != 3) throw DimensionError("global_mask: kernel must be 3x3");
  Tensor profile = ad::mean_rows(s);
  Tensor r = ad::mul(ad::reshape(p.w_r, {1, d}), profile);
  Tensor c = ad::mul(ad::reshape(p.w_c, {1, d}), profile);
  return ad::conv2d(ad::matmul(ad::transpose(r), c), p.kernel);
}

Tensor global_mask(const Tensor& s, const GlobalMaskParams& p) {
  return ad::matmul(s, ad::transpose(global_mask_matrix(s, p)));
}

Tensor auto_res(const Tensor& m_l, const Tensor& m_prev, const AutoResState& s) {
  if (m_l.shape() != m_prev.shape()) {
    throw DimensionError("auto_res: shapes " + ad::shape_string(m_l.shape()) + " and " +
                         ad::shape_string(m_prev.shape()) + " differ");
  }
  Tensor eps = ad::sigmoid(s.epsilon_raw);
  Tensor keep = ad::add_scalar(ad::scale(eps, -1.0), 1.0);
  return ad::add(ad::mul(eps, m_l), ad::mul(keep, m_prev));
}

Tensor hypermamba_block(const Tensor& m_l, const Tensor& m_prev, const BlockParams& p, const BlockOptions& opt) {
  if (m_l.rank() != 2 || m_l.cols() != p.norm_gain.cols()) {
    throw DimensionError("hypermamba_block: input " + ad::shape_string(m_l.shape()) + " does not match width " +
                         std::to_string(p.norm_gain.cols()));
  }
  const Index n = m_l.rows();
  Tensor x = ad::add(ad::mul(ad::layer_norm_rows(m_l), ad::repeat_rows(p.norm_gain, n)),
                     ad::repeat_rows(p.norm_bias, n));
  Tensor s = opt.use_global_mask ? global_mask(x, p.mask) : x;
  Tensor y = ssm::ssm_forward(s, p.ssm, opt.scan_workers);
  Tensor gate = ad::sigmoid(ad::add(ad::matmul(x, p.w_gate), ad::repeat_rows(p.b_gate, n)));
  return auto_res(ad::mul(y, gate), m_prev, p.auto_res);
}

}  // namespace graphmamba::hypermamba
