#include "graphmamba/core/model.hpp"

#include "graphmamba/ad/ops.hpp"
#include "graphmamba/errors.hpp"

#include <cmath>

namespace graphmamba::core {

using ad::Matrix;

namespace {

Tensor uniform(Index r, Index c, Index fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return Tensor::from_matrix(std::move(m), true);
}

Tensor zeros(Index r, Index c) { return Tensor::from_matrix(Matrix::Zero(r, c), true); }
Tensor ones(Index r, Index c) { return Tensor::from_matrix(Matrix::Ones(r, c), true); }

}  // namespace

void ModelConfig::validate() const {
  if (patch_size < 1 || patch_size % 2 == 0) throw ConfigError("patch_size must be a positive odd number");
  if (depth < 1) throw ConfigError("depth must be at least 1");
  if (embed_dim < 1) throw ConfigError("embed_dim must be positive");
  if (state_dim < 1) throw ConfigError("state_dim must be positive");
  if (max_hop < 0) throw ConfigError("max_hop must be non-negative");
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
  if (bands < 1) throw ConfigError("bands must be positive");
  if (class_count < 1) throw ConfigError("class_count must be positive");
  if (scan_workers < 1) throw ConfigError("scan_workers must be positive");
}

nlohmann::json to_json(const ModelConfig& cfg) {
  return {{"patch_size", cfg.patch_size}, {"depth", cfg.depth},           {"embed_dim", cfg.embed_dim},
          {"state_dim", cfg.state_dim},   {"max_hop", cfg.max_hop},       {"gamma", cfg.gamma},
          {"bands", cfg.bands},           {"class_count", cfg.class_count}, {"seed", cfg.seed},
          {"global_mask", cfg.global_mask}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  try {
    cfg.patch_size = j.at("patch_size").get<Index>();
    cfg.depth = j.at("depth").get<int>();
    cfg.embed_dim = j.at("embed_dim").get<Index>();
    cfg.state_dim = j.at("state_dim").get<Index>();
    cfg.max_hop = j.at("max_hop").get<int>();
    cfg.gamma = j.at("gamma").get<double>();
    cfg.bands = j.at("bands").get<Index>();
    cfg.class_count = j.at("class_count").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.global_mask = j.value("global_mask", true);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config is incomplete: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  graph_ = gcn::build_grid_graph(cfg_.patch_size, cfg_.max_hop);
  std::mt19937_64 rng(cfg_.seed);
  const Index c = cfg_.embed_dim, n = cfg_.patch_size * cfg_.patch_size;
  w_embed_ = uniform(cfg_.bands, c, cfg_.bands, rng);
  f_pos_ = zeros(n, c);
  for (int l = 0; l < cfg_.depth; ++l) {
    EncoderLayer layer;
    layer.block = hypermamba::BlockParams::init(c, cfg_.state_dim, rng);
    layer.gcn = gcn::SpatialGcnParams::init(c, c, rng);
    layer.w_out = zeros(c, c);
    layers_.push_back(std::move(layer));
  }
  head_.norm_gain = ones(1, c);
  head_.norm_bias = zeros(1, c);
  head_.w1 = uniform(c, c, c, rng);
  head_.b1 = zeros(1, c);
  head_.w2 = zeros(c, cfg_.class_count);
  head_.b2 = zeros(1, cfg_.class_count);
  register_parameters();
}

void Model::register_parameters() {
  params_.clear();
  params_.emplace_back("embed.w", w_embed_);
  params_.emplace_back("embed.pos", f_pos_);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    EncoderLayer& L = layers_[l];
    params_.emplace_back(p + "norm.gain", L.block.norm_gain);
    params_.emplace_back(p + "norm.bias", L.block.norm_bias);
    params_.emplace_back(p + "mask.w_r", L.block.mask.w_r);
    params_.emplace_back(p + "mask.w_c", L.block.mask.w_c);
    params_.emplace_back(p + "mask.kernel", L.block.mask.kernel);
    params_.emplace_back(p + "ssm.a_log", L.block.ssm.a_log);
    params_.emplace_back(p + "ssm.w_delta", L.block.ssm.w_delta);
    params_.emplace_back(p + "ssm.b_delta", L.block.ssm.b_delta);
    params_.emplace_back(p + "ssm.w_b", L.block.ssm.w_b);
    params_.emplace_back(p + "ssm.w_c", L.block.ssm.w_c);
    params_.emplace_back(p + "gate.w", L.block.w_gate);
    params_.emplace_back(p + "gate.b", L.block.b_gate);
    params_.emplace_back(p + "autores.epsilon_raw", L.block.auto_res.epsilon_raw);
    params_.emplace_back(p + "gcn.w", L.gcn.w);
    params_.emplace_back(p + "out.w", L.w_out);
  }
  params_.emplace_back("head.norm.gain", head_.norm_gain);
  params_.emplace_back("head.norm.bias", head_.norm_bias);
  params_.emplace_back("head.fc1.w", head_.w1);
  params_.emplace_back("head.fc1.b", head_.b1);
  params_.emplace_back("head.fc2.w", head_.w2);
  params_.emplace_back("head.fc2.b", head_.b2);
  // The mask parameters never reach the loss when the mask is disabled.
  if (!cfg_.global_mask) {
    for (auto& prm : params_) {
      if (prm.name.find(".mask.") != std::string::npos) prm.trainable = false;
    }
  }
}

Model Model::clone() const {
  Model m(cfg_);
  m.copy_values_from(*this);
  return m;
}

void Model::copy_values_from(const Model& other) {
  if (other.params_.size() != params_.size()) throw UsageError("copy_values_from: parameter lists differ");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].tensor.shape() != other.params_[i].tensor.shape()) {
      throw UsageError("copy_values_from: shape mismatch at '" + params_[i].name + "'");
    }
    params_[i].tensor.mutable_value() = other.params_[i].tensor.value();
  }
}

Index Model::parameter_count() const {
  Index n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

Tensor Model::encode(const hsi::PatchSample& patch, const ForwardOptions& opt) const {
  if (patch.side != cfg_.patch_size) {
    throw DimensionError("patch side " + std::to_string(patch.side) + " differs from model patch size " +
                         std::to_string(cfg_.patch_size));
  }
  hsi::TokenSequence seq = hsi::tokenize(patch, w_embed_, f_pos_);
  hypermamba::BlockOptions bopt;
  bopt.use_global_mask = cfg_.global_mask;
  bopt.scan_workers = cfg_.scan_workers;
  Tensor m = seq.tokens;
  Tensor m_prev = seq.tokens;
  for (const EncoderLayer& layer : layers_) {
    Tensor z = hypermamba::hypermamba_block(m, m_prev, layer.block, bopt);
    if (opt.dropout > 0.0 && opt.rng) z = ad::dropout(z, opt.dropout, *opt.rng);
    Tensor g = gcn::spatial_gcn_layer(z, graph_, cfg_.gamma, layer.gcn, cfg_.max_hop);
    Tensor next = ad::add(ad::matmul(g, layer.w_out), m);
    m_prev = m;
    m = next;
  }
  return m;
}

Tensor Model::forward(const hsi::PatchSample& patch, const ForwardOptions& opt) const {
  Tensor m = encode(patch, opt);
  Tensor center = ad::row(m, patch.center_token());
  Tensor normed = ad::add(ad::mul(ad::layer_norm_rows(center), head_.norm_gain), head_.norm_bias);
  Tensor hidden = ad::relu(ad::add(ad::matmul(normed, head_.w1), head_.b1));
  return ad::add(ad::matmul(hidden, head_.w2), head_.b2);
}

int Model::predict(const hsi::PatchSample& patch) const {
  ad::NoGradGuard no_grad;
  const Tensor logits = forward(patch);
  Index best = 0;
  logits.value().row(0).maxCoeff(&best);
  return static_cast<int>(best) + 1;
}

Model build_model(const ModelConfig& cfg) { return Model(cfg); }

}  // namespace graphmamba::core
