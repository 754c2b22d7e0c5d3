#pragma once

#include "graphmamba/hsi/cube.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

namespace graphmamba::hsi {

struct ClassCount {
  Index train = 0;
  Index val = 0;
};

// Fixed per-class train/validation counts; every remaining labeled pixel of the
// class goes to test. JSON form: {"seed": 0, "1": {"train": 15, "val": 15}, ...}
// with an optional "*" entry applied to classes not listed.
struct SplitSpec {
  std::map<int, ClassCount> per_class;
  std::optional<ClassCount> fallback;
  std::uint64_t seed = 0;

  static SplitSpec uniform(Index train, Index val, std::uint64_t seed);
  ClassCount count_for(int cls) const;
};

// Pixel indices (r * width + c), each list sorted ascending.
struct Splits {
  std::vector<Index> train;
  std::vector<Index> val;
  std::vector<Index> test;
};

Splits make_splits(const HsiCube& cube, const SplitSpec& spec);

nlohmann::json to_json(const SplitSpec& spec);
SplitSpec split_spec_from_json(const nlohmann::json& j);
SplitSpec load_split_spec(const std::filesystem::path& path);

nlohmann::json to_json(const Splits& splits);
Splits splits_from_json(const nlohmann::json& j);

}  // namespace graphmamba::hsi
