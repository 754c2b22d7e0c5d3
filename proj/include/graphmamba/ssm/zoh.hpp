#pragma once

#include "graphmamba/errors.hpp"

#include <cmath>

namespace graphmamba::ssm {

// Below this |delta * a| the input gain uses its Taylor expansion instead of
// expm1(delta * a) / a, which loses digits as a -> 0.
inline constexpr double kZohTaylorThreshold = 1e-6;

template <typename Scalar>
struct Discretized {
  Scalar a_bar;
  Scalar b_bar;
};

namespace detail {

template <typename Scalar>
Scalar zoh_gain_closed(Scalar a, Scalar delta) {
  using std::expm1;
  return expm1(delta * a) / a;
}

template <typename Scalar>
Scalar zoh_gain_taylor(Scalar a, Scalar delta) {
  const Scalar z = delta * a;
  return delta * (Scalar(1) + z / Scalar(2) + z * z / Scalar(6));
}

}  // namespace detail

// (exp(delta*a) - 1) / a, the factor that maps b to b_bar.
template <typename Scalar>
Scalar zoh_gain(Scalar a, Scalar delta) {
  using std::abs;
  return abs(delta * a) < Scalar(kZohTaylorThreshold) ? detail::zoh_gain_taylor(a, delta)
                                                      : detail::zoh_gain_closed(a, delta);
}

// d gain / d a, evaluated as delta^2 * g(delta*a) with
// g(z) = (z e^z - expm1 z) / z^2, switching to its series for small |z|.
template <typename Scalar>
Scalar zoh_gain_da(Scalar a, Scalar delta) {
  using std::abs;
  using std::exp;
  using std::expm1;
  const Scalar z = delta * a;
  Scalar g;
  if (abs(z) < Scalar(1e-2)) {
    g = Scalar(1) / 2 + z * (Scalar(1) / 3 + z * (Scalar(1) / 8 + z * (Scalar(1) / 30 + z / 144)));
  } else {
    g = (z * exp(z) - expm1(z)) / (z * z);
  }
  return delta * delta * g;
}

// Zero-order-hold discretization of the scalar system h' = a h + b x over a
// step delta: a_bar = exp(delta a), b_bar = (exp(delta a) - 1) / a * b.
template <typename Scalar>
Discretized<Scalar> discretize_zoh(Scalar a, Scalar b, Scalar delta) {
  using std::exp;
  if (!(delta > Scalar(0))) throw DomainError("discretize_zoh: step delta must be positive");
  return {exp(delta * a), zoh_gain(a, delta) * b};
}

}  // namespace graphmamba::ssm
