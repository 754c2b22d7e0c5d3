#pragma once

#include "graphmamba/hsi/cube.hpp"

#include <cstdint>

namespace graphmamba::hsi {

struct SynthSpec {
  int classes = 5;
  Index height = 64;
  Index width = 64;
  Index bands = 16;
  // Euclidean distance between every pair of class signatures.
  double separation = 0.5;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;
};

// Smooth class signatures [classes x bands]: a shared smooth baseline plus
// separation / sqrt(2) times mutually orthonormal smooth offsets, so all
// pairwise distances equal `separation`.
Eigen::MatrixXd class_signatures(const SynthSpec& spec);

// Voronoi class regions over seeded centers (two per class), signature plus
// i.i.d. Gaussian noise per band. Every pixel is labeled.
HsiCube synth_cube(const SynthSpec& spec);

}  // namespace graphmamba::hsi
