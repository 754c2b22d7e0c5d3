#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace graphmamba::hsi {

using Index = Eigen::Index;
using Raster = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// H x W x D reflectance plus an H x W label raster (0 = unlabeled). The
// reflectance is held pixel-major: row r*W + c holds the D band values of
// pixel (r, c), which is exactly the band-interleaved-by-pixel file order.
struct HsiCube {
  Index height = 0;
  Index width = 0;
  Index bands = 0;
  Raster reflectance;
  std::vector<std::uint16_t> labels;
  int class_count = 0;
  std::vector<std::string> class_names;

  Index pixel_count() const { return height * width; }
  Index pixel_index(Index r, Index c) const { return r * width + c; }
  std::uint16_t label(Index r, Index c) const { return labels[static_cast<std::size_t>(pixel_index(r, c))]; }
  // Throws DataError / DimensionError when an invariant is broken.
  void validate() const;
};

// Min-max per band to [0, 1]; a constant band maps to 0.
void normalize_bands(HsiCube& cube);

// Files for stem "dir/name":
//   dir/name.json         header {"height","width","bands","dtype":"float32",
//                         "layout":"bip","byte_order":"little","class_count",
//                         "class_names"}
//   dir/name.raw          float32 LE, band-interleaved-by-pixel, H*W*D values
//   dir/name.labels.raw   uint16 LE, row-major, H*W values, 0 = unlabeled
// `stem` may also be given with a trailing ".json".
void save_cube(const HsiCube& cube, const std::filesystem::path& stem);
HsiCube load_cube(const std::filesystem::path& stem, bool normalize = true);

std::filesystem::path cube_stem(const std::filesystem::path& path);

}  // namespace graphmamba::hsi
