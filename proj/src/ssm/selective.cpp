#include "graphmamba/ssm/selective.hpp"

#include "graphmamba/ad/ops.hpp"
#include "graphmamba/errors.hpp"
#include "graphmamba/ssm/scan.hpp"
#include "graphmamba/ssm/zoh.hpp"

#include <cmath>

namespace graphmamba::ssm {

using ad::Index;
using ad::Matrix;

namespace {

// Per-token quantities are laid out flat: row k of an [n x channels*state]
// matrix holds entry (c, s) at column c * state + s.
using Vec = Eigen::ArrayXd;
using VecMap = Eigen::Map<Vec>;
using ConstVecMap = Eigen::Map<const Vec>;

// out[c * state + s] = per_channel[c]
template <typename Row>
void expand_channels(const Row& per_channel, Index state, Vec& out) {
  double* o = out.data();
  for (Index c = 0; c < per_channel.size(); ++c) {
    const double v = per_channel(c);
    for (Index s = 0; s < state; ++s) o[c * state + s] = v;
  }
}

// out[c * state + s] = per_channel[c] * per_state[s]
template <typename RowC, typename RowS>
void outer_flat(const RowC& per_channel, const RowS& per_state, Vec& out) {
  const Index state = per_state.size();
  const double* ps = per_state.data();
  double* o = out.data();
  for (Index c = 0; c < per_channel.size(); ++c) {
    const double v = per_channel(c);
    for (Index s = 0; s < state; ++s) o[c * state + s] = v * ps[s];
  }
}

// out = [channels x state] block at `flat` times per_state
template <typename RowS, typename RowOut>
void readout(const double* flat, const RowS& per_state, Index channels, RowOut&& out) {
  Eigen::Map<const Matrix> block(flat, channels, per_state.size());
  out.noalias() = (block * per_state.transpose()).transpose();
}

// The zoh gain (exp(z) - 1) / A for z = delta * A, into `gain`. The closed
// form goes through exp() (which Eigen vectorizes) rather than expm1(), so
// entries with |z| < 1e-2 use a series long enough for full precision. Written
// as a plain loop so the compiler turns the branch into a vector blend.
template <typename Abar, typename Out>
void gain_into(const Vec& z, const Vec& delta, const Abar& a_bar, const Vec& inv_a, Out&& gain) {
  const double* zp = z.data();
  const double* dp = delta.data();
  const double* ep = a_bar.data();
  const double* ip = inv_a.data();
  double* gp = gain.data();
  for (Index i = 0; i < z.size(); ++i) {
    const double w = zp[i];
    const double series = dp[i] * (1.0 + w * (1.0 / 2 + w * (1.0 / 6 + w * (1.0 / 24 + w * (1.0 / 120 + w * (1.0 / 720))))));
    const double closed = (ep[i] - 1.0) * ip[i];
    gp[i] = std::abs(w) < 1e-2 ? series : closed;
  }
}

// d gain / d A = delta^2 g(z), g(z) = (z e^z - (e^z - 1)) / z^2.
template <typename Abar>
void gain_da_into(const Vec& z, const Vec& delta, const Abar& a_bar, Vec& out) {
  const double* zp = z.data();
  const double* dp = delta.data();
  const double* ep = a_bar.data();
  double* op = out.data();
  for (Index i = 0; i < z.size(); ++i) {
    const double w = zp[i], e = ep[i];
    const double series = 1.0 / 2 + w * (1.0 / 3 + w * (1.0 / 8 + w * (1.0 / 30 + w * (1.0 / 144 + w * (1.0 / 840)))));
    const double closed = (w * e - (e - 1.0)) / (w * w);
    op[i] = (std::abs(w) < 1e-2 ? series : closed) * dp[i] * dp[i];
  }
}

}  // namespace

SsmParams SsmParams::init(Index channels, Index state, std::mt19937_64& rng) {
  SsmParams p;
  Matrix a_log(channels, state);
  for (Index s = 0; s < state; ++s) a_log.col(s).setConstant(std::log(1.0 + static_cast<double>(s)));
  p.a_log = Tensor::from_matrix(std::move(a_log), true);

  auto uniform = [&](Index r, Index c, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return Tensor::from_matrix(std::move(m), true);
  };
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  p.w_delta = uniform(channels, channels, bound);
  p.w_b = uniform(channels, state, bound);
  p.w_c = uniform(channels, state, bound);

  // softplus^{-1}(dt) with dt log-uniform in [1e-3, 1e-1]
  std::uniform_real_distribution<double> u(std::log(1e-3), std::log(1e-1));
  Matrix bias(1, channels);
  for (Index c = 0; c < channels; ++c) {
    const double dt = std::exp(u(rng));
    bias(0, c) = dt + std::log(-std::expm1(-dt));
  }
  p.b_delta = Tensor::from_matrix(std::move(bias), true);
  return p;
}

Tensor state_matrix(const SsmParams& p) { return ad::scale(ad::exp(p.a_log), -1.0); }

Selection selective_project(const Tensor& tokens, const SsmParams& p) {
  if (tokens.cols() != p.channel_dim()) {
    throw DimensionError("selective_project: token width " + std::to_string(tokens.cols()) + " != channel dim " +
                         std::to_string(p.channel_dim()));
  }
  const Index n = tokens.rows();
  Selection s;
  s.delta = ad::softplus(ad::add(ad::matmul(tokens, p.w_delta), ad::repeat_rows(p.b_delta, n)));
  s.b = ad::matmul(tokens, p.w_b);
  s.c = ad::matmul(tokens, p.w_c);
  return s;
}

Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& b, const Tensor& c,
                      unsigned workers) {
  const Index n = x.rows(), channels = x.cols(), state = a.cols();
  if (n == 0) throw UsageError("selective_scan over an empty sequence");
  if (delta.rows() != n || delta.cols() != channels || a.rows() != channels || b.rows() != n || b.cols() != state ||
      c.rows() != n || c.cols() != state) {
    throw DimensionError("selective_scan: inconsistent shapes x" + ad::shape_string(x.shape()) + " delta" +
                         ad::shape_string(delta.shape()) + " A" + ad::shape_string(a.shape()) + " B" +
                         ad::shape_string(b.shape()) + " C" + ad::shape_string(c.shape()));
  }
  if ((delta.value().array() <= 0.0).any()) throw DomainError("selective_scan: delta must be strictly positive");

  const Index width = channels * state;
  const ConstVecMap a_flat(a.value().data(), width);
  const Vec inv_a = a_flat.inverse();
  // exp, gain, input, recurrence, readout
  ad::add_flops(static_cast<std::uint64_t>(n * width * 12));

  const bool record = ad::grad_enabled() && (x.requires_grad() || delta.requires_grad() || a.requires_grad() ||
                                              b.requires_grad() || c.requires_grad());
  if (!record && workers <= 1) {
    // Inference: stream the recurrence with one state vector, nothing stored.
    Matrix y(n, channels);
    Vec dexp(width), xb(width), z(width), ab(width), gn(width), hk = Vec::Zero(width);
    for (Index k = 0; k < n; ++k) {
      expand_channels(delta.value().row(k), state, dexp);
      outer_flat(x.value().row(k), b.value().row(k), xb);
      z = dexp * a_flat;
      ab = z.exp();
      gain_into(z, dexp, ab, inv_a, gn);
      hk = ab * hk + gn * xb;
      readout(hk.data(), c.value().row(k), channels, y.row(k));
    }
    return ad::make_result(ad::Shape{n, channels}, std::move(y), {x, delta, a, b, c}, {});
  }

  Matrix a_bar(n, width), gain(n, width), h(n, width);
  Vec dexp(width), xb(width), z(width);
  std::vector<ScanElement<double>> elements;
  if (workers > 1) elements.resize(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) {
    expand_channels(delta.value().row(k), state, dexp);
    outer_flat(x.value().row(k), b.value().row(k), xb);
    VecMap ab(a_bar.row(k).data(), width), gn(gain.row(k).data(), width), hk(h.row(k).data(), width);
    z = dexp * a_flat;
    ab = z.exp();
    gain_into(z, dexp, ab, inv_a, gn);
    if (workers > 1) {
      elements[static_cast<std::size_t>(k)].a = ab;
      elements[static_cast<std::size_t>(k)].b = gn * xb;
    } else if (k == 0) {
      hk = gn * xb;
    } else {
      hk = ab * ConstVecMap(h.row(k - 1).data(), width) + gn * xb;
    }
  }
  if (workers > 1) {
    const auto states = scan_parallel<double>(elements, StateArray<double>::Zero(width), workers);
    for (Index k = 0; k < n; ++k) h.row(k) = states[static_cast<std::size_t>(k)].transpose().matrix();
  }

  Matrix y(n, channels);
  for (Index k = 0; k < n; ++k) readout(h.row(k).data(), c.value().row(k), channels, y.row(k));
  if (!record) return ad::make_result(ad::Shape{n, channels}, std::move(y), {x, delta, a, b, c}, {});
  return ad::make_result(
      ad::Shape{n, channels}, std::move(y), {x, delta, a, b, c},
      [a_bar = std::move(a_bar), gain = std::move(gain), h = std::move(h), channels, state](ad::Node& self) {
        ad::Node& nx = *self.parents[0];
        ad::Node& nd = *self.parents[1];
        ad::Node& na = *self.parents[2];
        ad::Node& nb = *self.parents[3];
        ad::Node& nc = *self.parents[4];
        const Index n = self.value.rows(), width = channels * state;
        const ConstVecMap a_flat(na.value.data(), width);

        Matrix dx(n, channels), ddelta(n, channels), db(n, state), dc(n, state);
        Vec da = Vec::Zero(width), dh(width), carry = Vec::Zero(width), dexp(width), xb(width), z(width);
        Vec dgain(width), d_abar(width), du_gain(width), gda(width);
        for (Index k = n - 1; k >= 0; --k) {
          const ConstVecMap ab(a_bar.row(k).data(), width), gn(gain.row(k).data(), width);
          Eigen::Map<const Matrix> hk(h.row(k).data(), channels, state);
          dc.row(k).noalias() = self.grad.row(k) * hk;

          outer_flat(self.grad.row(k), nc.value.row(k), dh);
          dh += carry;
          if (k > 0) d_abar = dh * ConstVecMap(h.row(k - 1).data(), width);
          else d_abar.setZero();

          // u = gain * B_k * x_k
          outer_flat(nx.value.row(k), nb.value.row(k), xb);
          dgain = dh * xb;
          du_gain = dh * gn;
          Eigen::Map<const Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> du(du_gain.data(),
                                                                                                    channels, state);
          dx.row(k) = (du.matrix() * nb.value.row(k).transpose()).transpose();
          db.row(k) = nx.value.row(k) * du.matrix();

          expand_channels(nd.value.row(k), state, dexp);
          z = dexp * a_flat;
          // gain_delta = a_bar; a_bar_delta = A a_bar; a_bar_A = delta a_bar
          xb = (dgain + d_abar * a_flat) * ab;
          ddelta.row(k) = Eigen::Map<const Matrix>(xb.data(), channels, state).rowwise().sum().transpose();
          gain_da_into(z, dexp, ab, gda);
          da += dgain * gda + d_abar * dexp * ab;
          carry = dh * ab;
        }
        if (nx.requires_grad) nx.accumulate(dx);
        if (nd.requires_grad) nd.accumulate(ddelta);
        if (na.requires_grad) na.accumulate(Eigen::Map<const Matrix>(da.data(), channels, state));
        if (nb.requires_grad) nb.accumulate(db);
        if (nc.requires_grad) nc.accumulate(dc);
      });
}

Tensor ssm_forward(const Tensor& tokens, const SsmParams& p, unsigned workers) {
  if (tokens.rank() != 2) throw DimensionError("ssm_forward expects [n x channels] tokens");
  Selection s = selective_project(tokens, p);
  return selective_scan(tokens, s.delta, state_matrix(p), s.b, s.c, workers);
}

}  // namespace graphmamba::ssm
