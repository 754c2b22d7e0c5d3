#pragma once

#include "graphmamba/core/metrics.hpp"
#include "graphmamba/core/model.hpp"
#include "graphmamba/hsi/cube.hpp"
#include "graphmamba/hsi/split.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>

namespace graphmamba::core {

struct TrainConfig {
  double lr = 5e-4;
  int epochs = 200;
  Index batch = 32;
  double dropout = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  // Stop after this many epochs without a val improvement; 0 disables.
  int patience = 0;
  // Stop once val OA reaches this value; values above 1 disable.
  double target_val_oa = 2.0;
  // 0 picks the hardware concurrency. Results do not depend on this.
  unsigned workers = 0;
  // When set, the best-val parameters are written here whenever they improve.
  std::filesystem::path checkpoint_path;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_oa = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_oa = -1.0;
};

// Mini-batch Adam on center-token cross entropy. Per-sample gradients are
// summed in sample order, so the outcome is independent of the worker count.
// On return the model holds the best-val parameters.
TrainResult train(Model& model, const hsi::HsiCube& cube, const hsi::Splits& splits, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

// Loss of one patch with dropout off.
double sample_loss(const Model& model, const hsi::PatchSample& patch);

std::vector<int> predict_pixels(const Model& model, const hsi::HsiCube& cube, std::span<const Index> pixels,
                                unsigned workers = 0);

EvalReport evaluate(const Model& model, const hsi::HsiCube& cube, std::span<const Index> test_pixels,
                    unsigned workers = 0);

void write_train_log_csv(std::ostream& out, std::span<const EpochLog> log);

unsigned resolve_workers(unsigned requested);

}  // namespace graphmamba::core
