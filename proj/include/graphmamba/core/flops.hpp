#pragma once

#include "graphmamba/core/model.hpp"

#include <json.hpp>

#include <cstdint>

namespace graphmamba::core {

// Per-component cost for n patch sequences of p tokens with d features each.
// The symbolic counts follow the complexity expressions
//   mask 2 n p^2 d,  ssm 3 p (2d) n + p (2d) n,  gcn |E| p^2 d
// with |E| the nonzeros of the one-hop patch adjacency. The measured counts
// come from the op-level FLOP counter while one encoder layer's components run
// over the n sequences.
struct FlopReport {
  Index sequences = 0;
  Index tokens = 0;
  Index dim = 0;
  Index edges = 0;
  double mask_symbolic = 0.0, ssm_symbolic = 0.0, gcn_symbolic = 0.0;
  std::uint64_t mask_measured = 0, ssm_measured = 0, gcn_measured = 0;

  std::uint64_t measured_total() const { return mask_measured + ssm_measured + gcn_measured; }
};

FlopReport symbolic_flops(const ModelConfig& cfg, Index seq_len);
FlopReport count_flops(const ModelConfig& cfg, Index seq_len);

nlohmann::json to_json(const FlopReport& r);

}  // namespace graphmamba::core
