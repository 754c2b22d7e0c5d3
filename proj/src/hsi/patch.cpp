#include "graphmamba/hsi/patch.hpp"

#include "graphmamba/ad/ops.hpp"
#include "graphmamba/errors.hpp"

namespace graphmamba::hsi {

PatchSample extract_window(const HsiCube& cube, PixelCoord center, Index side) {
  if (side < 1 || side % 2 == 0) throw ConfigError("patch side must be a positive odd number, got " + std::to_string(side));
  if (center.row < 0 || center.row >= cube.height || center.col < 0 || center.col >= cube.width) {
    throw UsageError("patch center (" + std::to_string(center.row) + "," + std::to_string(center.col) +
                     ") lies outside the image");
  }
  PatchSample p;
  p.center = center;
  p.side = side;
  p.label = cube.label(center.row, center.col);
  p.window = ad::Matrix::Zero(side * side, cube.bands);
  const Index half = side / 2;
  for (Index dr = 0; dr < side; ++dr) {
    const Index r = center.row + dr - half;
    if (r < 0 || r >= cube.height) continue;
    for (Index dc = 0; dc < side; ++dc) {
      const Index c = center.col + dc - half;
      if (c < 0 || c >= cube.width) continue;
      p.window.row(dr * side + dc) = cube.reflectance.row(cube.pixel_index(r, c)).cast<double>();
    }
  }
  return p;
}

PatchSample extract_patch(const HsiCube& cube, PixelCoord center, Index side) {
  PatchSample p = extract_window(cube, center, side);
  if (p.label == 0) {
    throw UsageError("patch center (" + std::to_string(center.row) + "," + std::to_string(center.col) +
                     ") is unlabeled");
  }
  return p;
}

TokenSequence tokenize(const PatchSample& patch, const ad::Tensor& w_embed, const ad::Tensor& f_pos) {
  const Index n = patch.token_count();
  if (w_embed.rows() != patch.window.cols()) {
    throw DimensionError("tokenize: embedding expects " + std::to_string(w_embed.rows()) + " bands, patch has " +
                         std::to_string(patch.window.cols()));
  }
  if (f_pos.rows() != n || f_pos.cols() != w_embed.cols()) {
    throw DimensionError("tokenize: position table " + ad::shape_string(f_pos.shape()) + " does not match [" +
                         std::to_string(n) + "," + std::to_string(w_embed.cols()) + "]");
  }
  ad::Tensor x = ad::Tensor::from_matrix(patch.window);
  return {ad::add(ad::matmul(x, w_embed), f_pos), patch.center_token()};
}

}  // namespace graphmamba::hsi
