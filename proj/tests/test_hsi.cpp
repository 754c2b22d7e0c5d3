#include "support.hpp"

#include "graphmamba/errors.hpp"
#include "graphmamba/hsi/cube.hpp"
#include "graphmamba/hsi/patch.hpp"
#include "graphmamba/hsi/split.hpp"
#include "graphmamba/hsi/synth.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

namespace ad = graphmamba::ad;
namespace hsi = graphmamba::hsi;
namespace fs = std::filesystem;
using ad::Matrix;
using ad::Tensor;
using namespace testing_support;

namespace {

hsi::HsiCube random_cube(Index h, Index w, Index d, int classes, std::mt19937_64& rng, double unlabeled = 0.0) {
  hsi::HsiCube c;
  c.height = h;
  c.width = w;
  c.bands = d;
  c.class_count = classes;
  c.reflectance = hsi::Raster(h * w, d);
  std::uniform_real_distribution<float> u(-5.0f, 5.0f);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> cls(1, classes);
  for (Index i = 0; i < c.reflectance.size(); ++i) c.reflectance.data()[i] = u(rng);
  c.labels.resize(static_cast<std::size_t>(h * w));
  for (auto& l : c.labels) l = coin(rng) < unlabeled ? 0 : static_cast<std::uint16_t>(cls(rng));
  return c;
}

fs::path temp_stem(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "gm_hsi_tests";
  fs::create_directories(dir);
  return dir / name;
}

// Nearest class signature by Euclidean distance; returns 1-based labels.
double nearest_signature_oa(const hsi::HsiCube& cube, const Eigen::MatrixXd& sig) {
  Index right = 0;
  for (Index i = 0; i < cube.pixel_count(); ++i) {
    const Eigen::RowVectorXd x = cube.reflectance.row(i).cast<double>();
    Index best = 0;
    (sig.rowwise() - x).rowwise().squaredNorm().minCoeff(&best);
    if (best + 1 == cube.labels[static_cast<std::size_t>(i)]) ++right;
  }
  return static_cast<double>(right) / static_cast<double>(cube.pixel_count());
}

}  // namespace

TEST_CASE("cube save/load round trip is bitwise exact") {
  std::mt19937_64 rng(1);
  hsi::HsiCube c = random_cube(8, 8, 5, 3, rng);
  c.class_names = {"a", "b", "c"};
  const fs::path stem = temp_stem("roundtrip");
  hsi::save_cube(c, stem);
  hsi::HsiCube back = hsi::load_cube(stem, false);
  CHECK(back.height == 8);
  CHECK(back.width == 8);
  CHECK(back.bands == 5);
  CHECK(back.class_count == 3);
  CHECK(back.class_names == c.class_names);
  CHECK(std::memcmp(back.reflectance.data(), c.reflectance.data(), sizeof(float) * 320) == 0);
  CHECK(back.labels == c.labels);
  hsi::HsiCube via_json = hsi::load_cube(fs::path(stem.string() + ".json"), false);
  CHECK(via_json.reflectance == c.reflectance);
}

TEST_CASE("band normalization maps to the unit interval and zeroes constant bands") {
  std::mt19937_64 rng(2);
  hsi::HsiCube c = random_cube(6, 7, 4, 2, rng);
  c.reflectance.col(2).setConstant(3.5f);
  hsi::normalize_bands(c);
  for (Index b = 0; b < 4; ++b) {
    if (b == 2) {
      CHECK(c.reflectance.col(b).isZero(0.0f));
    } else {
      CHECK(c.reflectance.col(b).minCoeff() == 0.0f);
      CHECK(c.reflectance.col(b).maxCoeff() == 1.0f);
    }
  }
}

TEST_CASE("truncated raster names expected and actual sizes") {
  std::mt19937_64 rng(3);
  hsi::HsiCube c = random_cube(4, 4, 3, 2, rng);
  const fs::path stem = temp_stem("truncated");
  hsi::save_cube(c, stem);
  fs::resize_file(fs::path(stem.string() + ".raw"), 100);
  try {
    hsi::load_cube(stem);
    FAIL("expected a format error");
  } catch (const graphmamba::FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("100 bytes") != std::string::npos);
    CHECK(msg.find("expected 192") != std::string::npos);
  }
}

TEST_CASE("non-finite reflectance is a data error") {
  std::mt19937_64 rng(4);
  hsi::HsiCube c = random_cube(3, 3, 2, 2, rng);
  const fs::path stem = temp_stem("nonfinite");
  hsi::save_cube(c, stem);
  {
    std::fstream f(stem.string() + ".raw", std::ios::in | std::ios::out | std::ios::binary);
    const float bad = std::numeric_limits<float>::quiet_NaN();
    f.seekp(8);
    f.write(reinterpret_cast<const char*>(&bad), 4);
  }
  CHECK_THROWS_AS(hsi::load_cube(stem), graphmamba::DataError);
}

TEST_CASE("patch extraction interior and corner") {
  std::mt19937_64 rng(5);
  hsi::HsiCube c = random_cube(9, 10, 3, 2, rng);
  hsi::PatchSample p = hsi::extract_patch(c, {4, 5}, 3);
  for (Index dr = 0; dr < 3; ++dr)
    for (Index dc = 0; dc < 3; ++dc)
      CHECK(p.window.row(dr * 3 + dc) == c.reflectance.row(c.pixel_index(3 + dr, 4 + dc)).cast<double>());
  CHECK(p.label == c.label(4, 5));

  hsi::PatchSample corner = hsi::extract_patch(c, {0, 0}, 3);
  int zero_rows = 0;
  for (Index t = 0; t < 9; ++t) zero_rows += corner.window.row(t).isZero(0.0) ? 1 : 0;
  CHECK(zero_rows == 5);

  c.labels[static_cast<std::size_t>(c.pixel_index(2, 2))] = 0;
  CHECK_THROWS_AS(hsi::extract_patch(c, {2, 2}, 3), graphmamba::UsageError);
  CHECK_NOTHROW(hsi::extract_window(c, {2, 2}, 3));
  CHECK_THROWS_AS(hsi::extract_patch(c, {1, 1}, 4), graphmamba::ConfigError);
}

TEST_CASE("patch extraction fuzz over border and random centers") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<Index> dim(1, 12);
    const Index h = dim(rng), w = dim(rng);
    hsi::HsiCube c = random_cube(h, w, 2, 3, rng);
    const Index side = 2 * std::uniform_int_distribution<Index>(0, 4)(rng) + 1;
    std::vector<hsi::PixelCoord> centers;
    for (Index r = 0; r < h; ++r)
      for (Index col = 0; col < w; ++col)
        if (r == 0 || col == 0 || r == h - 1 || col == w - 1 || (r * 7 + col) % 5 == 0) centers.push_back({r, col});
    for (const auto& ctr : centers) {
      hsi::PatchSample p = hsi::extract_window(c, ctr, side);
      const Index half = side / 2;
      for (Index dr = 0; dr < side; ++dr)
        for (Index dc = 0; dc < side; ++dc) {
          const Index r = ctr.row + dr - half, col = ctr.col + dc - half;
          const auto got = p.window.row(dr * side + dc);
          if (r < 0 || r >= h || col < 0 || col >= w) {
            CHECK(got.isZero(0.0));
          } else {
            CHECK(got == c.reflectance.row(c.pixel_index(r, col)).cast<double>());
          }
        }
    }
  }
}

TEST_CASE("tokenization cases") {
  std::mt19937_64 rng(7);
  hsi::HsiCube c = random_cube(7, 7, 4, 2, rng);
  hsi::PatchSample p = hsi::extract_patch(c, {3, 3}, 5);
  Tensor pos = random_tensor(25, 4, rng, false);

  auto zero_embed = hsi::tokenize(p, Tensor::zeros({4, 4}), pos);
  CHECK(zero_embed.tokens.value() == pos.value());
  CHECK(zero_embed.center_index == 12);

  auto ident = hsi::tokenize(p, Tensor::from_matrix(Matrix::Identity(4, 4)), Tensor::zeros({25, 4}));
  CHECK(ident.tokens.value() == p.window);

  Tensor w = random_tensor(4, 6, rng, false);
  Tensor pos6 = random_tensor(25, 6, rng, false);
  auto t = hsi::tokenize(p, w, pos6);
  for (Index i = 0; i < 25; ++i)
    for (Index k = 0; k < 6; ++k) {
      double acc = pos6(i, k);
      for (Index b = 0; b < 4; ++b) acc += p.window(i, b) * w(b, k);
      CHECK(std::abs(t.tokens(i, k) - acc) < 1e-14);
    }

  CHECK_THROWS_AS(hsi::tokenize(p, Tensor::zeros({3, 6}), pos6), graphmamba::DimensionError);
  CHECK_THROWS_AS(hsi::tokenize(p, w, Tensor::zeros({24, 6})), graphmamba::DimensionError);
}

TEST_CASE("tokenization is affine in pixel values") {
  std::mt19937_64 rng(8);
  hsi::HsiCube c = random_cube(9, 9, 5, 2, rng);
  hsi::PatchSample p = hsi::extract_patch(c, {4, 4}, 5);
  Tensor w = random_tensor(5, 8, rng, false), pos = random_tensor(25, 8, rng, false);
  hsi::PatchSample q = p;
  const double alpha = -1.75;
  q.window *= alpha;
  const Matrix base = hsi::tokenize(p, w, pos).tokens.value() - pos.value();
  const Matrix scaled = hsi::tokenize(q, w, pos).tokens.value() - pos.value();
  CHECK((scaled - alpha * base).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("split arithmetic and determinism") {
  hsi::HsiCube c;
  c.height = 10;
  c.width = 10;
  c.bands = 1;
  c.class_count = 1;
  c.reflectance = hsi::Raster::Zero(100, 1);
  c.labels.assign(100, 1);
  auto s = hsi::make_splits(c, hsi::SplitSpec::uniform(30, 30, 5));
  CHECK(s.train.size() == 30);
  CHECK(s.val.size() == 30);
  CHECK(s.test.size() == 40);
  auto again = hsi::make_splits(c, hsi::SplitSpec::uniform(30, 30, 5));
  CHECK(again.train == s.train);
  CHECK(again.val == s.val);
  CHECK(again.test == s.test);
  auto other = hsi::make_splits(c, hsi::SplitSpec::uniform(30, 30, 6));
  CHECK(other.train != s.train);
}

TEST_CASE("split sizes follow the Indian Pines class table") {
  const std::vector<Index> train{15, 30, 30, 30, 30, 30, 15, 30, 15, 30, 30, 30, 30, 30, 30, 30};
  const std::vector<Index> test{31, 1398, 800, 207, 453, 700, 13, 448, 5, 942, 2425, 563, 175, 1235, 356, 63};
  std::vector<std::uint16_t> labels;
  for (std::size_t k = 0; k < train.size(); ++k) labels.insert(labels.end(), static_cast<std::size_t>(2 * train[k] + test[k]), static_cast<std::uint16_t>(k + 1));
  labels.resize(110 * 100, 0);
  std::mt19937_64 rng(9);
  std::shuffle(labels.begin(), labels.end(), rng);
  hsi::HsiCube c;
  c.height = 110;
  c.width = 100;
  c.bands = 1;
  c.class_count = 16;
  c.reflectance = hsi::Raster::Zero(11000, 1);
  c.labels = labels;

  hsi::SplitSpec spec;
  spec.seed = 3;
  for (int k = 1; k <= 16; ++k) spec.per_class[k] = {train[static_cast<std::size_t>(k - 1)], train[static_cast<std::size_t>(k - 1)]};
  auto s = hsi::make_splits(c, spec);
  std::vector<Index> tr(17, 0), va(17, 0), te(17, 0);
  for (Index i : s.train) ++tr[c.labels[static_cast<std::size_t>(i)]];
  for (Index i : s.val) ++va[c.labels[static_cast<std::size_t>(i)]];
  for (Index i : s.test) ++te[c.labels[static_cast<std::size_t>(i)]];
  for (int k = 1; k <= 16; ++k) {
    CHECK(tr[static_cast<std::size_t>(k)] == train[static_cast<std::size_t>(k - 1)]);
    CHECK(va[static_cast<std::size_t>(k)] == train[static_cast<std::size_t>(k - 1)]);
    CHECK(te[static_cast<std::size_t>(k)] == test[static_cast<std::size_t>(k - 1)]);
  }
  CHECK(te[1] == 31);
  CHECK(s.train.size() == 435);
  CHECK(s.val.size() == 435);
  CHECK(s.test.size() == 9814);
}

TEST_CASE("split fuzz: disjoint sets with exact per-class counts") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    std::uniform_int_distribution<int> kdist(1, 6);
    const int k = kdist(rng);
    hsi::HsiCube c = random_cube(15, 17, 1, k, rng, 0.3);
    std::vector<Index> have(static_cast<std::size_t>(k) + 1, 0);
    for (auto l : c.labels) ++have[l];
    hsi::SplitSpec spec;
    spec.seed = rng();
    for (int cls = 1; cls <= k; ++cls) {
      const Index avail = have[static_cast<std::size_t>(cls)];
      const Index t = std::uniform_int_distribution<Index>(0, avail)(rng);
      const Index v = std::uniform_int_distribution<Index>(0, avail - t)(rng);
      spec.per_class[cls] = {t, v};
    }
    auto s = hsi::make_splits(c, spec);
    std::set<Index> all;
    for (const auto* part : {&s.train, &s.val, &s.test})
      for (Index i : *part) {
        CHECK(all.insert(i).second);
        CHECK(c.labels[static_cast<std::size_t>(i)] != 0);
      }
    CHECK(static_cast<Index>(all.size()) == std::accumulate(have.begin() + 1, have.end(), Index{0}));
    for (int cls = 1; cls <= k; ++cls) {
      auto count = [&](const std::vector<Index>& v) {
        return std::count_if(v.begin(), v.end(), [&](Index i) { return c.labels[static_cast<std::size_t>(i)] == cls; });
      };
      CHECK(count(s.train) == spec.per_class[cls].train);
      CHECK(count(s.val) == spec.per_class[cls].val);
    }
  }
}

TEST_CASE("infeasible split names the class") {
  hsi::HsiCube c;
  c.height = 2;
  c.width = 5;
  c.bands = 1;
  c.class_count = 2;
  c.reflectance = hsi::Raster::Zero(10, 1);
  c.labels = {1, 1, 1, 1, 1, 1, 2, 2, 2, 2};
  try {
    hsi::make_splits(c, hsi::SplitSpec::uniform(2, 3, 0));
    FAIL("expected a config error");
  } catch (const graphmamba::ConfigError& e) {
    CHECK(std::string(e.what()).find("class 2") != std::string::npos);
  }
}

TEST_CASE("split spec and splits JSON round trip") {
  hsi::SplitSpec spec;
  spec.seed = 42;
  spec.per_class[1] = {15, 15};
  spec.fallback = hsi::ClassCount{30, 30};
  hsi::SplitSpec back = hsi::split_spec_from_json(hsi::to_json(spec));
  CHECK(back.seed == 42);
  CHECK(back.count_for(1).train == 15);
  CHECK(back.count_for(7).val == 30);
  CHECK_THROWS_AS(hsi::split_spec_from_json(nlohmann::json::parse(R"({"x": {"train": 1, "val": 1}})")),
                  graphmamba::FormatError);

  hsi::Splits s{{1, 5}, {2}, {3, 4}};
  hsi::Splits r = hsi::splits_from_json(hsi::to_json(s));
  CHECK(r.train == s.train);
  CHECK(r.val == s.val);
  CHECK(r.test == s.test);
}

TEST_CASE("synthetic cube: separable, deterministic, chance level without separation") {
  hsi::SynthSpec spec;
  spec.height = 32;
  spec.width = 32;
  spec.noise_sigma = 0.0;
  spec.separation = 2.0;
  spec.seed = 11;
  hsi::HsiCube c = hsi::synth_cube(spec);
  CHECK(nearest_signature_oa(c, hsi::class_signatures(spec)) == 1.0);
  CHECK(std::all_of(c.labels.begin(), c.labels.end(), [](auto l) { return l >= 1 && l <= 5; }));

  hsi::HsiCube again = hsi::synth_cube(spec);
  CHECK(std::memcmp(again.reflectance.data(), c.reflectance.data(), sizeof(float) * static_cast<std::size_t>(c.reflectance.size())) == 0);
  CHECK(again.labels == c.labels);

  const Eigen::MatrixXd sig = hsi::class_signatures(spec);
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j) CHECK(std::abs((sig.row(i) - sig.row(j)).norm() - 2.0) < 1e-12);

  // Identical signatures: ties go to the first class, so OA is that class's share.
  double mean_oa = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    hsi::SynthSpec flat = spec;
    flat.separation = 0.0;
    flat.noise_sigma = 0.1;
    flat.seed = seed;
    hsi::HsiCube fc = hsi::synth_cube(flat);
    mean_oa += nearest_signature_oa(fc, hsi::class_signatures(flat)) / 5.0;
  }
  CHECK(std::abs(mean_oa - 0.2) <= 0.1);
}
