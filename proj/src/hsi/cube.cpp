#include "graphmamba/hsi/cube.hpp"

#include "graphmamba/errors.hpp"

#include <json.hpp>

#include <bit>
#include <fstream>
#include <iterator>

namespace graphmamba::hsi {

namespace fs = std::filesystem;

namespace {

fs::path with_suffix(const fs::path& stem, const std::string& suffix) { return fs::path(stem.string() + suffix); }

std::vector<char> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const fs::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

template <typename UInt>
void put_le(std::vector<char>& out, UInt v) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename UInt>
UInt get_le(const char* p) {
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

}  // namespace

void HsiCube::validate() const {
  if (height < 1 || width < 1 || bands < 1) throw DimensionError("cube extents must be positive");
  if (reflectance.rows() != pixel_count() || reflectance.cols() != bands) {
    throw DimensionError("reflectance raster does not match cube extents");
  }
  if (static_cast<Index>(labels.size()) != pixel_count()) throw DimensionError("label raster does not match cube extents");
  if (!reflectance.allFinite()) throw DataError("reflectance contains non-finite values");
  for (auto l : labels) {
    if (l > class_count) throw DataError("label " + std::to_string(l) + " exceeds class count " + std::to_string(class_count));
  }
}

void normalize_bands(HsiCube& cube) {
  for (Index b = 0; b < cube.bands; ++b) {
    auto col = cube.reflectance.col(b);
    const float lo = col.minCoeff(), hi = col.maxCoeff();
    if (hi > lo) {
      // compute in double, store as float
      for (Index i = 0; i < col.size(); ++i) {
        col(i) = static_cast<float>((static_cast<double>(col(i)) - lo) / (static_cast<double>(hi) - lo));
      }
    } else {
      col.setZero();
    }
  }
}

fs::path cube_stem(const fs::path& path) {
  if (path.extension() == ".json") return path.parent_path() / path.stem();
  return path;
}

void save_cube(const HsiCube& cube, const fs::path& path) {
  cube.validate();
  const fs::path stem = cube_stem(path);
  nlohmann::json header = {{"height", cube.height},
                           {"width", cube.width},
                           {"bands", cube.bands},
                           {"dtype", "float32"},
                           {"layout", "bip"},
                           {"byte_order", "little"},
                           {"class_count", cube.class_count},
                           {"class_names", cube.class_names}};
  const std::string text = header.dump(2) + "\n";
  write_all(with_suffix(stem, ".json"), std::vector<char>(text.begin(), text.end()));

  std::vector<char> raster;
  raster.reserve(static_cast<std::size_t>(cube.reflectance.size()) * 4);
  for (Index i = 0; i < cube.reflectance.size(); ++i) put_le(raster, std::bit_cast<std::uint32_t>(cube.reflectance.data()[i]));
  write_all(with_suffix(stem, ".raw"), raster);

  std::vector<char> labels;
  labels.reserve(cube.labels.size() * 2);
  for (auto l : cube.labels) put_le(labels, l);
  write_all(with_suffix(stem, ".labels.raw"), labels);
}

HsiCube load_cube(const fs::path& path, bool normalize) {
  const fs::path stem = cube_stem(path);
  const auto header_bytes = read_all(with_suffix(stem, ".json"));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("cube header is not valid JSON: " + std::string(e.what()));
  }
  HsiCube cube;
  try {
    cube.height = header.at("height").get<Index>();
    cube.width = header.at("width").get<Index>();
    cube.bands = header.at("bands").get<Index>();
    cube.class_count = header.value("class_count", 0);
    cube.class_names = header.value("class_names", std::vector<std::string>{});
    if (header.value("dtype", "float32") != "float32" || header.value("layout", "bip") != "bip" ||
        header.value("byte_order", "little") != "little") {
      throw FormatError("unsupported cube encoding (need float32, bip, little-endian)");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("cube header is missing fields: " + std::string(e.what()));
  }
  if (cube.height < 1 || cube.width < 1 || cube.bands < 1) throw FormatError("cube header has non-positive extents");

  const auto raster = read_all(with_suffix(stem, ".raw"));
  const auto expected = static_cast<std::size_t>(cube.height * cube.width * cube.bands) * 4;
  if (raster.size() != expected) {
    throw FormatError("reflectance raster " + with_suffix(stem, ".raw").string() + " has " +
                      std::to_string(raster.size()) + " bytes, expected " + std::to_string(expected));
  }
  cube.reflectance.resize(cube.height * cube.width, cube.bands);
  for (Index i = 0; i < cube.reflectance.size(); ++i) {
    cube.reflectance.data()[i] = std::bit_cast<float>(get_le<std::uint32_t>(raster.data() + 4 * i));
  }
  if (!cube.reflectance.allFinite()) throw DataError("reflectance raster contains non-finite values");

  const auto label_bytes = read_all(with_suffix(stem, ".labels.raw"));
  const auto expected_labels = static_cast<std::size_t>(cube.height * cube.width) * 2;
  if (label_bytes.size() != expected_labels) {
    throw FormatError("label raster has " + std::to_string(label_bytes.size()) + " bytes, expected " +
                      std::to_string(expected_labels));
  }
  cube.labels.resize(static_cast<std::size_t>(cube.height * cube.width));
  for (std::size_t i = 0; i < cube.labels.size(); ++i) cube.labels[i] = get_le<std::uint16_t>(label_bytes.data() + 2 * i);
  if (cube.class_count == 0) {
    for (auto l : cube.labels) cube.class_count = std::max<int>(cube.class_count, l);
  }
  cube.validate();
  if (normalize) normalize_bands(cube);
  return cube;
}

}  // namespace graphmamba::hsi
