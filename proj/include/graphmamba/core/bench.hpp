#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace graphmamba::core {

struct BenchRow {
  Eigen::Index length = 0;
  unsigned workers = 1;
  double median_ns = 0.0;
  double p95_ns = 0.0;
};

struct BenchOptions {
  unsigned workers = 1;
  int repeats = 15;
  Eigen::Index channels = 4;
  Eigen::Index state = 16;
  std::uint64_t seed = 0;
};

// Times the parallel prefix scan over random stable elements of each length.
std::vector<BenchRow> bench_scan(std::span<const Eigen::Index> lengths, const BenchOptions& opt);

void write_bench_csv(std::ostream& out, std::span<const BenchRow> rows);

// Least-squares slope of log y against log x.
double fit_power_law(std::span<const double> x, std::span<const double> y);

}  // namespace graphmamba::core
