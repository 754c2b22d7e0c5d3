#include "support.hpp"

#include "graphmamba/errors.hpp"
#include "graphmamba/ssm/scan.hpp"
#include "graphmamba/ssm/selective.hpp"
#include "graphmamba/ssm/zoh.hpp"

#include <doctest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>

namespace ad = graphmamba::ad;
namespace ssm = graphmamba::ssm;
using ad::Matrix;
using ad::Tensor;
using namespace testing_support;

using Elem = ssm::ScanElement<double>;
using State = ssm::StateArray<double>;

namespace {

std::vector<Elem> random_elements(std::size_t n, Index width, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ua(0.0, 1.0), ub(-1.0, 1.0);
  std::vector<Elem> out(n);
  for (auto& e : out) {
    e.a = State::NullaryExpr(width, [&] { return ua(rng); });
    e.b = State::NullaryExpr(width, [&] { return ub(rng); });
  }
  return out;
}

double max_abs_diff(const std::vector<State>& x, const std::vector<State>& y) {
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, (x[i] - y[i]).abs().maxCoeff());
  return m;
}

// Direct per-step recurrence with the closed-form discretization.
Matrix naive_scan(const Matrix& x, const Matrix& delta, const Matrix& a, const Matrix& b, const Matrix& c) {
  const Index n = x.rows(), ch = x.cols(), st = a.cols();
  Matrix h = Matrix::Zero(ch, st), y = Matrix::Zero(n, ch);
  for (Index k = 0; k < n; ++k) {
    for (Index i = 0; i < ch; ++i) {
      for (Index s = 0; s < st; ++s) {
        const double abar = std::exp(delta(k, i) * a(i, s));
        const double gain = std::expm1(delta(k, i) * a(i, s)) / a(i, s);
        h(i, s) = abar * h(i, s) + gain * b(k, s) * x(k, i);
        y(k, i) += c(k, s) * h(i, s);
      }
    }
  }
  return y;
}

struct ScanInputs {
  Tensor x, delta, a, b, c;
};

ScanInputs random_scan_inputs(Index n, Index ch, Index st, std::mt19937_64& rng) {
  return {random_tensor(n, ch, rng), random_tensor(n, ch, rng, true, 0.05, 1.0),
          random_tensor(ch, st, rng, true, -3.0, -0.2), random_tensor(n, st, rng), random_tensor(n, st, rng)};
}

}  // namespace

TEST_CASE("zoh scalar examples") {
  auto small_a = ssm::discretize_zoh(1e-12 * -1.0, 2.0, 0.5);
  CHECK(small_a.a_bar == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(small_a.b_bar == doctest::Approx(1.0).epsilon(1e-12));
  auto small_dt = ssm::discretize_zoh(-3.0, 5.0, 1e-12);
  CHECK(std::abs(small_dt.a_bar - std::exp(-3e-12)) < 1e-16);
  CHECK(std::abs(small_dt.b_bar) < 1e-10);
  auto unit = ssm::discretize_zoh(-1.0, 1.0, 1.0);
  CHECK(std::abs(unit.a_bar - std::exp(-1.0)) < 1e-15);
  CHECK(std::abs(unit.b_bar - (1.0 - std::exp(-1.0))) < 1e-15);
  CHECK_THROWS_AS(ssm::discretize_zoh(-1.0, 1.0, 0.0), graphmamba::DomainError);
  CHECK_THROWS_AS(ssm::discretize_zoh(-1.0, 1.0, -1e-3), graphmamba::DomainError);
}

TEST_CASE("zoh gain derivative matches a 50-digit closed form") {
  using Big = boost::multiprecision::cpp_bin_float_50;
  for (double a : {-5.0, -1.0, -0.1, -1e-3, -1e-6, -1e-9}) {
    for (double dt : {1e-3, 0.1, 1.0}) {
      const Big z = Big(a) * Big(dt);
      const Big want = Big(dt) * Big(dt) * (z * boost::multiprecision::exp(z) - boost::multiprecision::expm1(z)) / (z * z);
      const double got = ssm::zoh_gain_da(a, dt);
      CHECK(static_cast<double>(abs(Big(got) - want) / abs(want)) < 1e-12);
    }
  }
}

TEST_CASE("scan sequential examples") {
  const Index w = 3;
  std::vector<Elem> ones(6, Elem{State::Ones(w), State::Ones(w)});
  auto h = ssm::scan_sequential<double>(ones, State::Zero(w));
  for (std::size_t k = 0; k < h.size(); ++k) CHECK((h[k] == static_cast<double>(k + 1)).all());
  auto hp = ssm::scan_parallel<double>(ones, State::Zero(w), 3);
  CHECK(max_abs_diff(h, hp) == 0.0);

  std::mt19937_64 rng(1);
  auto elems = random_elements(9, w, rng);
  for (auto& e : elems) e.a.setZero();
  auto hz = ssm::scan_sequential<double>(elems, State::Ones(w));
  for (std::size_t k = 0; k < elems.size(); ++k) CHECK((hz[k] == elems[k].b).all());
}

TEST_CASE("scan of length one") {
  std::mt19937_64 rng(2);
  auto e = random_elements(1, 4, rng);
  State h0 = State::Random(4);
  auto out = ssm::scan_parallel<double>(e, h0);
  REQUIRE(out.size() == 1);
  CHECK(((out[0] - (e[0].a * h0 + e[0].b)).abs() < 1e-15).all());
}

TEST_CASE("empty scans are rejected") {
  std::vector<Elem> none;
  CHECK_THROWS_AS(ssm::scan_sequential<double>(none, State::Zero(2)), graphmamba::UsageError);
  CHECK_THROWS_AS(ssm::scan_parallel<double>(none, State::Zero(2)), graphmamba::UsageError);
}

TEST_CASE("parallel scan equals sequential scan") {
  std::mt19937_64 rng(3);
  for (std::size_t n : {1, 2, 3, 7, 8, 64, 1000}) {
    auto e = random_elements(n, 8, rng);
    State h0 = State::Random(8);
    auto seq = ssm::scan_sequential<double>(e, h0);
    auto par = ssm::scan_parallel<double>(e, h0, 4);
    CHECK(max_abs_diff(seq, par) < 1e-10);
  }
}

TEST_CASE("parallel scan is bitwise independent of worker count") {
  std::mt19937_64 rng(4);
  auto e = random_elements(3000, 16, rng);
  State h0 = State::Zero(16);
  auto ref = ssm::scan_parallel<double>(e, h0, 1);
  for (unsigned w : {2u, 3u, 8u}) CHECK(max_abs_diff(ref, ssm::scan_parallel<double>(e, h0, w)) == 0.0);
}

TEST_CASE("scan combine is associative") {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    auto e = random_elements(3, 4, rng);
    Elem l = ssm::combine(ssm::combine(e[0], e[1]), e[2]);
    Elem r = ssm::combine(e[0], ssm::combine(e[1], e[2]));
    worst = std::max({worst, (l.a - r.a).abs().maxCoeff(), (l.b - r.b).abs().maxCoeff()});
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("selective projection examples") {
  std::mt19937_64 rng(6);
  ssm::SsmParams p = ssm::SsmParams::init(5, 3, rng);
  p.b_delta.mutable_value().setZero();
  auto s = ssm::selective_project(Tensor::zeros({2, 5}), p);
  CHECK((s.delta.value().array() - std::log(2.0)).abs().maxCoeff() < 1e-15);

  Tensor tok = random_tensor(4, 5, rng, false);
  p.b_delta = random_tensor(1, 5, rng);
  s = ssm::selective_project(tok, p);
  const Matrix& x = tok.value();
  for (Index k = 0; k < 4; ++k) {
    for (Index c = 0; c < 5; ++c) {
      double pre = p.b_delta(0, c);
      for (Index j = 0; j < 5; ++j) pre += x(k, j) * p.w_delta(j, c);
      CHECK(std::abs(s.delta(k, c) - std::log1p(std::exp(pre))) < 1e-14);
    }
    for (Index st = 0; st < 3; ++st) {
      double bb = 0.0, cc = 0.0;
      for (Index j = 0; j < 5; ++j) {
        bb += x(k, j) * p.w_b(j, st);
        cc += x(k, j) * p.w_c(j, st);
      }
      CHECK(std::abs(s.b(k, st) - bb) < 1e-14);
      CHECK(std::abs(s.c(k, st) - cc) < 1e-14);
    }
  }
  CHECK_THROWS_AS(ssm::selective_project(Tensor::zeros({2, 4}), p), graphmamba::DimensionError);
}

TEST_CASE("state matrix stays negative with the ladder initialization") {
  std::mt19937_64 rng(7);
  ssm::SsmParams p = ssm::SsmParams::init(3, 4, rng);
  Tensor a = ssm::state_matrix(p);
  for (Index s = 0; s < 4; ++s) CHECK(a(1, s) == doctest::Approx(-(1.0 + static_cast<double>(s))).epsilon(1e-14));
  CHECK((a.value().array() < 0.0).all());
}

TEST_CASE("ssm without input coupling outputs zeros") {
  std::mt19937_64 rng(8);
  ssm::SsmParams p = ssm::SsmParams::init(4, 6, rng);
  p.w_b.mutable_value().setZero();
  Tensor y = ssm::ssm_forward(random_tensor(7, 4, rng), p);
  CHECK(y.value().isZero(0.0));
}

TEST_CASE("ssm single step closed form") {
  std::mt19937_64 rng(9);
  ScanInputs in = random_scan_inputs(1, 3, 4, rng);
  Tensor y = ssm::selective_scan(in.x, in.delta, in.a, in.b, in.c);
  for (Index i = 0; i < 3; ++i) {
    double expect = 0.0;
    for (Index s = 0; s < 4; ++s) {
      const auto d = ssm::discretize_zoh(in.a(i, s), in.b(0, s), in.delta(0, i));
      expect += in.c(0, s) * d.b_bar * in.x(0, i);
    }
    CHECK(std::abs(y(0, i) - expect) < 1e-14);
  }
}

TEST_CASE("selective scan matches a naive loop and finite differences") {
  std::mt19937_64 rng(10);
  for (unsigned workers : {1u, 3u}) {
    ScanInputs in = random_scan_inputs(6, 2, 5, rng);
    const Matrix expect = naive_scan(in.x.value(), in.delta.value(), in.a.value(), in.b.value(), in.c.value());
    Tensor y = ssm::selective_scan(in.x, in.delta, in.a, in.b, in.c, workers);
    CHECK((y.value() - expect).cwiseAbs().maxCoeff() < 1e-10);
    {
      ad::NoGradGuard ng;
      Tensor y2 = ssm::selective_scan(in.x, in.delta, in.a, in.b, in.c, workers);
      CHECK((y2.value() - expect).cwiseAbs().maxCoeff() < 1e-10);
    }
    const Matrix w = random_matrix(6, 2, rng);
    const double err = max_fd_error({in.x, in.delta, in.a, in.b, in.c}, [&] {
      return probe_loss(ssm::selective_scan(in.x, in.delta, in.a, in.b, in.c, workers), w);
    });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("selective scan gradient near a zero state coefficient") {
  // Exercises the series branch of the input gain.
  std::mt19937_64 rng(11);
  ScanInputs in = random_scan_inputs(5, 2, 3, rng);
  in.a.mutable_value() << -1e-4, -2e-3, -0.5, -3e-3, -1e-5, -1.0;
  const Matrix expect = naive_scan(in.x.value(), in.delta.value(), in.a.value(), in.b.value(), in.c.value());
  CHECK((ssm::selective_scan(in.x, in.delta, in.a, in.b, in.c).value() - expect).cwiseAbs().maxCoeff() < 1e-12);
  const Matrix w = random_matrix(5, 2, rng);
  CHECK(max_fd_error({in.x, in.delta, in.a, in.b, in.c},
                     [&] { return probe_loss(ssm::selective_scan(in.x, in.delta, in.a, in.b, in.c), w); }) < 1e-4);
}

TEST_CASE("ssm forward gradients through the projections") {
  std::mt19937_64 rng(12);
  ssm::SsmParams p = ssm::SsmParams::init(3, 4, rng);
  Tensor tok = random_tensor(6, 3, rng);
  const Matrix w = random_matrix(6, 3, rng);
  CHECK(max_fd_error({tok, p.a_log, p.w_delta, p.b_delta, p.w_b, p.w_c},
                     [&] { return probe_loss(ssm::ssm_forward(tok, p), w); }) < 1e-4);
}

TEST_CASE("scan is linear in the input for frozen selection") {
  std::mt19937_64 rng(13);
  ScanInputs in = random_scan_inputs(20, 3, 4, rng);
  const double alpha = -2.75;
  Tensor y = ssm::selective_scan(in.x, in.delta, in.a, in.b, in.c);
  Tensor ys = ssm::selective_scan(ad::scale(in.x, alpha), in.delta, in.a, in.b, in.c);
  CHECK((ys.value() - alpha * y.value()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("state stays bounded over ten thousand steps") {
  std::mt19937_64 rng(14);
  const Index n = 10000;
  ScanInputs in = random_scan_inputs(n, 2, 4, rng);
  ad::NoGradGuard ng;
  Tensor y = ssm::selective_scan(in.x, in.delta, in.a, in.b, in.c);
  CHECK(y.value().allFinite());
  // |h| <= max|gain B x| / (1 - max a_bar) with every input bounded by 1
  CHECK(y.value().cwiseAbs().maxCoeff() < 4.0 * 1.0 / (1.0 - std::exp(-0.05 * 0.2)));
}

TEST_CASE("selective scan rejects bad inputs") {
  std::mt19937_64 rng(15);
  ScanInputs in = random_scan_inputs(4, 2, 3, rng);
  Tensor bad = Tensor::from_matrix(-in.delta.value());
  CHECK_THROWS_AS(ssm::selective_scan(in.x, bad, in.a, in.b, in.c), graphmamba::DomainError);
  CHECK_THROWS_AS(ssm::selective_scan(in.x, in.delta, in.a, in.c, Tensor::zeros({4, 2})), graphmamba::DimensionError);
}
