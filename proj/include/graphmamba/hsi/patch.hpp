#pragma once

#include "graphmamba/ad/tensor.hpp"
#include "graphmamba/hsi/cube.hpp"

namespace graphmamba::hsi {

struct PixelCoord {
  Index row = 0;
  Index col = 0;
  bool operator==(const PixelCoord&) const = default;
};

// p x p x D window around a labeled pixel, zero outside the image. The window
// is stored as [p*p x D], spatial positions in row-major order.
struct PatchSample {
  PixelCoord center;
  Index side = 0;
  ad::Matrix window;
  int label = 0;

  Index token_count() const { return side * side; }
  Index center_token() const { return (side / 2) * side + side / 2; }
};

PatchSample extract_patch(const HsiCube& cube, PixelCoord center, Index side);
// Same, without requiring a labeled center (used for full-scene prediction).
PatchSample extract_window(const HsiCube& cube, PixelCoord center, Index side);

struct TokenSequence {
  ad::Tensor tokens;  // [p*p x C]
  Index center_index = 0;
};

// M0 = X W_embed + F_pos, one token per patch pixel in row-major order.
TokenSequence tokenize(const PatchSample& patch, const ad::Tensor& w_embed, const ad::Tensor& f_pos);

}  // namespace graphmamba::hsi
