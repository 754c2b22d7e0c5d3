#pragma once

#include "graphmamba/ad/adam.hpp"
#include "graphmamba/gcn/spatial_gcn.hpp"
#include "graphmamba/hsi/patch.hpp"
#include "graphmamba/hypermamba.hpp"

#include <json.hpp>

#include <cstdint>
#include <random>
#include <vector>

namespace graphmamba::core {

using ad::Tensor;
using Index = Eigen::Index;

struct ModelConfig {
  Index patch_size = 11;
  int depth = 8;
  Index embed_dim = 64;
  Index state_dim = 16;
  int max_hop = 2;
  double gamma = 0.2;
  Index bands = 0;
  int class_count = 0;
  std::uint64_t seed = 0;
  bool global_mask = true;
  unsigned scan_workers = 1;

  // Throws ConfigError naming the first violated constraint.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct EncoderLayer {
  hypermamba::BlockParams block;
  gcn::SpatialGcnParams gcn;
  Tensor w_out;  // [C x C], zero at init so the layer starts as the identity
};

struct Head {
  Tensor norm_gain, norm_bias;  // [1 x C]
  Tensor w1, b1;                // [C x C], [1 x C]
  Tensor w2, b2;                // [C x K], [1 x K], zero at init
};

struct ForwardOptions {
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;
};

// Embedding, `depth` encoder layers
//   M_{l+1} = W_out-projection( SpatialGCN( dropout( HyperMamba(M_l, M_{l-1}) ) ) ) + M_l
// and a normalized two-layer MLP head on the center token.
class Model {
 public:
  explicit Model(const ModelConfig& cfg);
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  // Independent copy with the same parameter values (optimizer state not copied).
  Model clone() const;

  const ModelConfig& config() const { return cfg_; }
  const gcn::HopGraph& graph() const { return graph_; }
  std::vector<ad::Parameter>& parameters() { return params_; }
  const std::vector<ad::Parameter>& parameters() const { return params_; }
  Index parameter_count() const;
  void copy_values_from(const Model& other);

  // Class logits [1 x K] for one patch.
  Tensor forward(const hsi::PatchSample& patch, const ForwardOptions& opt = {}) const;
  // Output of the encoder stack, [p*p x C].
  Tensor encode(const hsi::PatchSample& patch, const ForwardOptions& opt = {}) const;
  int predict(const hsi::PatchSample& patch) const;

  const std::vector<EncoderLayer>& layers() const { return layers_; }

 private:
  void register_parameters();

  ModelConfig cfg_;
  gcn::HopGraph graph_;
  Tensor w_embed_;  // [D x C]
  Tensor f_pos_;    // [p*p x C]
  std::vector<EncoderLayer> layers_;
  Head head_;
  std::vector<ad::Parameter> params_;
};

Model build_model(const ModelConfig& cfg);

}  // namespace graphmamba::core
