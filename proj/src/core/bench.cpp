#include "graphmamba/core/bench.hpp"

#include "graphmamba/errors.hpp"
#include "graphmamba/ssm/scan.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <random>

namespace graphmamba::core {

namespace {

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

std::vector<BenchRow> bench_scan(std::span<const Eigen::Index> lengths, const BenchOptions& opt) {
  if (opt.repeats < 1) throw ConfigError("repeats must be positive");
  if (opt.workers < 1) throw ConfigError("workers must be positive");
  const Eigen::Index width = opt.channels * opt.state;
  if (width < 1) throw ConfigError("scan width must be positive");
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> decay(0.5, 0.999), input(-1.0, 1.0);

  std::vector<BenchRow> rows;
  for (Eigen::Index len : lengths) {
    if (len < 1) throw ConfigError("scan length must be positive");
    std::vector<ssm::ScanElement<double>> elems(static_cast<std::size_t>(len));
    for (auto& e : elems) {
      e.a = ssm::StateArray<double>::NullaryExpr(width, [&] { return decay(rng); });
      e.b = ssm::StateArray<double>::NullaryExpr(width, [&] { return input(rng); });
    }
    const ssm::StateArray<double> h0 = ssm::StateArray<double>::Zero(width);
    std::span<const ssm::ScanElement<double>> view(elems);
    (void)ssm::scan_parallel(view, h0, opt.workers);  // warm-up

    std::vector<double> times;
    for (int r = 0; r < opt.repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      auto out = ssm::scan_parallel(view, h0, opt.workers);
      const auto t1 = std::chrono::steady_clock::now();
      if (!std::isfinite(out.back()(0))) throw DataError("scan benchmark produced a non-finite state");
      times.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
    }
    rows.push_back({len, opt.workers, quantile(times, 0.5), quantile(times, 0.95)});
  }
  return rows;
}

void write_bench_csv(std::ostream& out, std::span<const BenchRow> rows) {
  out << "length,workers,median_ns,p95_ns\n";
  for (const auto& r : rows) {
    out << r.length << ',' << r.workers << ',' << static_cast<std::int64_t>(std::llround(r.median_ns)) << ','
        << static_cast<std::int64_t>(std::llround(r.p95_ns)) << '\n';
  }
}

double fit_power_law(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw UsageError("power-law fit needs at least two paired points");
  Eigen::MatrixXd design(static_cast<Eigen::Index>(x.size()), 2);
  Eigen::VectorXd target(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw DomainError("power-law fit needs positive data");
    design(static_cast<Eigen::Index>(i), 0) = std::log(x[i]);
    design(static_cast<Eigen::Index>(i), 1) = 1.0;
    target(static_cast<Eigen::Index>(i)) = std::log(y[i]);
  }
  return design.colPivHouseholderQr().solve(target)(0);
}

}  // namespace graphmamba::core
