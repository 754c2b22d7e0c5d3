#include "graphmamba/hsi/split.hpp"

#include "graphmamba/errors.hpp"

#include <algorithm>
#include <fstream>
#include <random>

namespace graphmamba::hsi {

SplitSpec SplitSpec::uniform(Index train, Index val, std::uint64_t seed) {
  SplitSpec s;
  s.fallback = ClassCount{train, val};
  s.seed = seed;
  return s;
}

ClassCount SplitSpec::count_for(int cls) const {
  if (auto it = per_class.find(cls); it != per_class.end()) return it->second;
  if (fallback) return *fallback;
  throw ConfigError("split spec has no counts for class " + std::to_string(cls));
}

Splits make_splits(const HsiCube& cube, const SplitSpec& spec) {
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(cube.class_count) + 1);
  for (Index i = 0; i < cube.pixel_count(); ++i) {
    const auto l = cube.labels[static_cast<std::size_t>(i)];
    if (l == 0) continue;
    if (l > cube.class_count) throw DataError("label exceeds class count");
    by_class[l].push_back(i);
  }

  std::string infeasible;
  for (int cls = 1; cls <= cube.class_count; ++cls) {
    const ClassCount want = spec.count_for(cls);
    if (want.train < 0 || want.val < 0) throw ConfigError("negative split count for class " + std::to_string(cls));
    const auto have = static_cast<Index>(by_class[static_cast<std::size_t>(cls)].size());
    if (want.train + want.val > have) {
      infeasible += (infeasible.empty() ? "" : "; ") + std::string("class ") + std::to_string(cls) + " has " +
                    std::to_string(have) + " labeled pixels, needs " + std::to_string(want.train) + " train + " +
                    std::to_string(want.val) + " val";
    }
  }
  if (!infeasible.empty()) throw ConfigError("infeasible split: " + infeasible);

  Splits out;
  for (int cls = 1; cls <= cube.class_count; ++cls) {
    auto pool = by_class[static_cast<std::size_t>(cls)];
    std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(cls));
    std::shuffle(pool.begin(), pool.end(), rng);
    const ClassCount want = spec.count_for(cls);
    const auto t = static_cast<std::ptrdiff_t>(want.train), v = static_cast<std::ptrdiff_t>(want.val);
    out.train.insert(out.train.end(), pool.begin(), pool.begin() + t);
    out.val.insert(out.val.end(), pool.begin() + t, pool.begin() + t + v);
    out.test.insert(out.test.end(), pool.begin() + t + v, pool.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

nlohmann::json to_json(const SplitSpec& spec) {
  nlohmann::json j;
  j["seed"] = spec.seed;
  for (const auto& [cls, c] : spec.per_class) j[std::to_string(cls)] = {{"train", c.train}, {"val", c.val}};
  if (spec.fallback) j["*"] = {{"train", spec.fallback->train}, {"val", spec.fallback->val}};
  return j;
}

SplitSpec split_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("split spec must be a JSON object");
  SplitSpec s;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "seed") {
        s.seed = value.get<std::uint64_t>();
        continue;
      }
      ClassCount c{value.at("train").get<Index>(), value.at("val").get<Index>()};
      if (key == "*") {
        s.fallback = c;
        continue;
      }
      std::size_t used = 0;
      const int cls = std::stoi(key, &used);
      if (used != key.size() || cls < 1) throw FormatError("split spec key '" + key + "' is not a class id");
      s.per_class[cls] = c;
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed split spec: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw FormatError("split spec has a non-numeric class key");
  }
  return s;
}

SplitSpec load_split_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open split spec " + path.string());
  try {
    return split_spec_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("split spec is not valid JSON: " + std::string(e.what()));
  }
}

nlohmann::json to_json(const Splits& splits) {
  return {{"train", splits.train}, {"val", splits.val}, {"test", splits.test}};
}

Splits splits_from_json(const nlohmann::json& j) {
  try {
    return {j.at("train").get<std::vector<Index>>(), j.at("val").get<std::vector<Index>>(),
            j.at("test").get<std::vector<Index>>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed splits file: ") + e.what());
  }
}

}  // namespace graphmamba::hsi
