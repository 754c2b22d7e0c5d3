#include "graphmamba/core/flops.hpp"

#include "graphmamba/errors.hpp"

namespace graphmamba::core {

FlopReport symbolic_flops(const ModelConfig& cfg, Index seq_len) {
  if (seq_len < 1) throw ConfigError("sequence count must be positive");
  if (cfg.patch_size < 1 || cfg.patch_size % 2 == 0 || cfg.embed_dim < 1) {
    throw ConfigError("flop count needs an odd positive patch size and a positive embed dim");
  }
  FlopReport r;
  r.sequences = seq_len;
  r.tokens = cfg.patch_size * cfg.patch_size;
  r.dim = cfg.embed_dim;
  r.edges = gcn::build_grid_graph(cfg.patch_size, 1).adjacency[1].nonZeros();
  const auto n = static_cast<double>(seq_len), p = static_cast<double>(r.tokens), d = static_cast<double>(r.dim);
  r.mask_symbolic = 2.0 * n * p * p * d;
  r.ssm_symbolic = 3.0 * p * (2.0 * d) * n + p * (2.0 * d) * n;
  r.gcn_symbolic = static_cast<double>(r.edges) * p * p * d;
  return r;
}

FlopReport count_flops(const ModelConfig& cfg, Index seq_len) {
  FlopReport r = symbolic_flops(cfg, seq_len);
  std::mt19937_64 rng(cfg.seed);
  const auto block = hypermamba::BlockParams::init(r.dim, cfg.state_dim, rng);
  const auto gcn_params = gcn::SpatialGcnParams::init(r.dim, r.dim, rng);
  const auto graph = gcn::build_grid_graph(cfg.patch_size, cfg.max_hop);
  std::normal_distribution<double> normal(0.0, 1.0);

  ad::NoGradGuard no_grad;
  for (Index s = 0; s < seq_len; ++s) {
    ad::Matrix x(r.tokens, r.dim);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    const Tensor tokens = Tensor::from_matrix(std::move(x));

    ad::reset_flops();
    (void)hypermamba::global_mask(tokens, block.mask);
    r.mask_measured += ad::flop_count();

    ad::reset_flops();
    (void)ssm::ssm_forward(tokens, block.ssm, cfg.scan_workers);
    r.ssm_measured += ad::flop_count();

    ad::reset_flops();
    (void)gcn::spatial_gcn_layer(tokens, graph, cfg.gamma, gcn_params, cfg.max_hop);
    r.gcn_measured += ad::flop_count();
  }
  ad::reset_flops();
  return r;
}

nlohmann::json to_json(const FlopReport& r) {
  auto ratio = [](std::uint64_t measured, double symbolic) {
    return symbolic > 0.0 ? static_cast<double>(measured) / symbolic : 0.0;
  };
  return {{"sequences", r.sequences},
          {"tokens", r.tokens},
          {"dim", r.dim},
          {"edges", r.edges},
          {"global_mask", {{"symbolic", r.mask_symbolic}, {"measured", r.mask_measured},
                           {"ratio", ratio(r.mask_measured, r.mask_symbolic)}}},
          {"ssm", {{"symbolic", r.ssm_symbolic}, {"measured", r.ssm_measured},
                   {"ratio", ratio(r.ssm_measured, r.ssm_symbolic)}}},
          {"gcn", {{"symbolic", r.gcn_symbolic}, {"measured", r.gcn_measured},
                   {"ratio", ratio(r.gcn_measured, r.gcn_symbolic)}}},
          {"measured_total", r.measured_total()}};
}

}  // namespace graphmamba::core
