#pragma once

#include "graphmamba/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <span>
#include <thread>
#include <vector>

namespace graphmamba::ssm {

template <typename Scalar>
using StateArray = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

// One step of the linear recurrence h_k = a_k * h_{k-1} + b_k, elementwise over
// a flattened channel x state vector. Elements compose as affine maps.
template <typename Scalar>
struct ScanElement {
  StateArray<Scalar> a;
  StateArray<Scalar> b;

  static ScanElement identity(Eigen::Index n) { return {StateArray<Scalar>::Ones(n), StateArray<Scalar>::Zero(n)}; }
};

// Apply `first`, then `second`: (a1, b1) o (a2, b2) = (a2 a1, a2 b1 + b2).
template <typename Scalar>
ScanElement<Scalar> combine(const ScanElement<Scalar>& first, const ScanElement<Scalar>& second) {
  return {second.a * first.a, second.a * first.b + second.b};
}

namespace detail {

template <typename Scalar>
void check_scan_input(std::span<const ScanElement<Scalar>> elements, const StateArray<Scalar>& h0) {
  if (elements.empty()) throw UsageError("scan over an empty sequence");
  for (const auto& e : elements) {
    if (e.a.size() != h0.size() || e.b.size() != h0.size()) {
      throw DimensionError("scan element width differs from initial state width");
    }
  }
}

// Runs body(i) for i in [0, count), split into contiguous chunks. The split only
// changes which thread evaluates an index, never the arithmetic.
template <typename Body>
void parallel_for(std::size_t count, unsigned workers, std::size_t min_per_worker, Body&& body) {
  const std::size_t useful = min_per_worker == 0 ? count : count / min_per_worker;
  const unsigned n = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(useful, 1)));
  if (n <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(n - 1);
  const std::size_t chunk = (count + n - 1) / n;
  for (unsigned w = 1; w < n; ++w) {
    const std::size_t lo = w * chunk, hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    });
  }
  for (std::size_t i = 0; i < std::min(count, chunk); ++i) body(i);
}

}  // namespace detail

// Left-to-right evaluation of h_k = a_k h_{k-1} + b_k; returns h_1..h_n.
template <typename Scalar>
std::vector<StateArray<Scalar>> scan_sequential(std::span<const ScanElement<Scalar>> elements,
                                                const StateArray<Scalar>& h0) {
  detail::check_scan_input(elements, h0);
  std::vector<StateArray<Scalar>> out;
  out.reserve(elements.size());
  StateArray<Scalar> h = h0;
  for (const auto& e : elements) {
    h = e.a * h + e.b;
    out.push_back(h);
  }
  return out;
}

// Work-efficient (Blelloch) scan: an up-sweep builds subtree compositions, a
// down-sweep turns them into exclusive prefixes, and each position then applies
// its own element. The combine tree depends only on the padded length, so the
// result is bitwise identical for every worker count.
template <typename Scalar>
std::vector<StateArray<Scalar>> scan_parallel(std::span<const ScanElement<Scalar>> elements,
                                              const StateArray<Scalar>& h0, unsigned workers = 1) {
  detail::check_scan_input(elements, h0);
  const std::size_t n = elements.size();
  const Eigen::Index width = h0.size();
  std::size_t padded = 1;
  while (padded < n) padded <<= 1;

  std::vector<ScanElement<Scalar>> tree(padded);
  for (std::size_t i = 0; i < n; ++i) tree[i] = elements[i];
  for (std::size_t i = n; i < padded; ++i) tree[i] = ScanElement<Scalar>::identity(width);

  // Each combine touches `width` values; below this many combines per worker
  // thread start-up costs more than it saves.
  const std::size_t min_per_worker = std::max<std::size_t>(1, 16384 / static_cast<std::size_t>(std::max<Eigen::Index>(width, 1)));

  for (std::size_t stride = 1; stride < padded; stride <<= 1) {
    const std::size_t pairs = padded / (2 * stride);
    detail::parallel_for(pairs, workers, min_per_worker, [&](std::size_t p) {
      const std::size_t right = (2 * p + 2) * stride - 1;
      const std::size_t left = right - stride;
      tree[right] = combine(tree[left], tree[right]);
    });
  }

  tree[padded - 1] = ScanElement<Scalar>::identity(width);
  for (std::size_t stride = padded >> 1; stride >= 1; stride >>= 1) {
    const std::size_t pairs = padded / (2 * stride);
    detail::parallel_for(pairs, workers, min_per_worker, [&](std::size_t p) {
      const std::size_t right = (2 * p + 2) * stride - 1;
      const std::size_t left = right - stride;
      ScanElement<Scalar> left_sum = std::move(tree[left]);
      tree[left] = tree[right];
      tree[right] = combine(tree[right], left_sum);
    });
    if (stride == 1) break;
  }

  std::vector<StateArray<Scalar>> out(n);
  detail::parallel_for(n, workers, min_per_worker, [&](std::size_t k) {
    // exclusive prefix of k, then element k
    const ScanElement<Scalar>& prefix = tree[k];
    const ScanElement<Scalar>& e = elements[k];
    out[k] = e.a * (prefix.a * h0 + prefix.b) + e.b;
  });
  return out;
}

}  // namespace graphmamba::ssm
