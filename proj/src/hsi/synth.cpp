#include "graphmamba/hsi/synth.hpp"

#include "graphmamba/errors.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace graphmamba::hsi {

namespace {

// Independent streams for signatures, regions and noise so that changing one
// knob (say noise_sigma) leaves the others untouched.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t which) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(which)};
  return std::mt19937_64(seq);
}

void check(const SynthSpec& spec) {
  if (spec.classes < 2) throw ConfigError("synthetic cube needs at least 2 classes");
  if (spec.height < 1 || spec.width < 1 || spec.bands < 1) throw ConfigError("synthetic cube extents must be positive");
  if (spec.classes > spec.bands) {
    throw ConfigError("synthetic cube needs bands >= classes for orthogonal signatures");
  }
  if (spec.classes > 65535) throw ConfigError("too many classes for a u16 label raster");
  if (spec.separation < 0.0 || spec.noise_sigma < 0.0) throw ConfigError("separation and noise must be non-negative");
}

}  // namespace

Eigen::MatrixXd class_signatures(const SynthSpec& spec) {
  check(spec);
  auto rng = stream(spec.seed, 1);
  std::uniform_real_distribution<double> freq(0.5, 3.0), phase(0.0, 2.0 * std::numbers::pi), amp(0.5, 1.0);
  const Index d = spec.bands;
  auto position = [d](Index b) { return d == 1 ? 0.0 : static_cast<double>(b) / static_cast<double>(d - 1); };

  Eigen::RowVectorXd base(d);
  const double base_phase = phase(rng);
  for (Index b = 0; b < d; ++b) base(b) = 0.5 + 0.15 * std::sin(2.0 * std::numbers::pi * position(b) + base_phase);

  Eigen::MatrixXd offsets(spec.classes, d);
  for (int k = 0; k < spec.classes; ++k) {
    for (int attempt = 0;; ++attempt) {
      Eigen::RowVectorXd v(d);
      double f[3], ph[3], a[3];
      for (int t = 0; t < 3; ++t) {
        f[t] = freq(rng) * (1.0 + 0.5 * k);
        ph[t] = phase(rng);
        a[t] = amp(rng);
      }
      for (Index b = 0; b < d; ++b) {
        v(b) = 0.0;
        for (int t = 0; t < 3; ++t) v(b) += a[t] * std::cos(std::numbers::pi * f[t] * position(b) + ph[t]);
      }
      // Gram-Schmidt against earlier offsets, applied twice.
      for (int pass = 0; pass < 2; ++pass) {
        for (int j = 0; j < k; ++j) v -= v.dot(offsets.row(j)) * offsets.row(j);
      }
      const double norm = v.norm();
      if (norm > 1e-6) {
        offsets.row(k) = v / norm;
        break;
      }
      if (attempt > 100) throw ConfigError("could not build orthogonal class signatures");
    }
  }
  return (offsets * (spec.separation / std::numbers::sqrt2)).rowwise() + base;
}

HsiCube synth_cube(const SynthSpec& spec) {
  const Eigen::MatrixXd signatures = class_signatures(spec);

  auto region_rng = stream(spec.seed, 2);
  const int centers = 2 * spec.classes;
  std::uniform_real_distribution<double> ur(0.0, static_cast<double>(spec.height)),
      uc(0.0, static_cast<double>(spec.width));
  const double min_dist =
      0.5 * std::sqrt(static_cast<double>(spec.height * spec.width) / static_cast<double>(centers));
  std::vector<std::pair<double, double>> pts;
  int tries = 0;
  while (static_cast<int>(pts.size()) < centers) {
    const std::pair<double, double> cand{ur(region_rng), uc(region_rng)};
    bool ok = true;
    if (++tries < 10000) {
      for (const auto& p : pts) {
        if (std::hypot(p.first - cand.first, p.second - cand.second) < min_dist) {
          ok = false;
          break;
        }
      }
    }
    if (ok) pts.push_back(cand);
  }

  HsiCube cube;
  cube.height = spec.height;
  cube.width = spec.width;
  cube.bands = spec.bands;
  cube.class_count = spec.classes;
  for (int k = 1; k <= spec.classes; ++k) cube.class_names.push_back("class_" + std::to_string(k));
  cube.labels.resize(static_cast<std::size_t>(cube.pixel_count()));
  cube.reflectance.resize(cube.pixel_count(), spec.bands);

  auto noise_rng = stream(spec.seed, 3);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (Index r = 0; r < spec.height; ++r) {
    for (Index c = 0; c < spec.width; ++c) {
      const double y = static_cast<double>(r) + 0.5, x = static_cast<double>(c) + 0.5;
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int i = 0; i < centers; ++i) {
        const double dd = std::hypot(pts[static_cast<std::size_t>(i)].first - y, pts[static_cast<std::size_t>(i)].second - x);
        if (dd < best_d) {
          best_d = dd;
          best = i;
        }
      }
      const int cls = best % spec.classes;
      const Index idx = cube.pixel_index(r, c);
      cube.labels[static_cast<std::size_t>(idx)] = static_cast<std::uint16_t>(cls + 1);
      for (Index b = 0; b < spec.bands; ++b) {
        const double v = signatures(cls, b) + (spec.noise_sigma > 0.0 ? spec.noise_sigma * noise(noise_rng) : 0.0);
        cube.reflectance(idx, b) = static_cast<float>(v);
      }
    }
  }
  return cube;
}

}  // namespace graphmamba::hsi
