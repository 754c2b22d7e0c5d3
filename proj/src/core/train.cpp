#include "graphmamba/core/train.hpp"

#include "graphmamba/ad/checkpoint.hpp"
#include "graphmamba/ad/ops.hpp"
#include "graphmamba/errors.hpp"
#include "graphmamba/ssm/scan.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

namespace graphmamba::core {

namespace {

hsi::PixelCoord coord_of(const hsi::HsiCube& cube, Index pixel) { return {pixel / cube.width, pixel % cube.width}; }

std::mt19937_64 sample_rng(std::uint64_t seed, int epoch, Index position) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(position)};
  return std::mt19937_64(seq);
}

Index flat_size(const std::vector<ad::Parameter>& params) {
  Index n = 0;
  for (const auto& p : params) n += p.tensor.size();
  return n;
}

double accuracy(std::span<const int> truth, std::span<const int> pred) {
  if (truth.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == pred[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

std::vector<int> labels_of(const hsi::HsiCube& cube, std::span<const Index> pixels) {
  std::vector<int> out;
  out.reserve(pixels.size());
  for (Index p : pixels) out.push_back(cube.labels[static_cast<std::size_t>(p)]);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch < 1) throw ConfigError("batch must be at least 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adam eps must be positive");
  if (patience < 0) throw ConfigError("patience must be non-negative");
}

unsigned resolve_workers(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

double sample_loss(const Model& model, const hsi::PatchSample& patch) {
  ad::NoGradGuard no_grad;
  return ad::cross_entropy(model.forward(patch), patch.label - 1).item();
}

std::vector<int> predict_pixels(const Model& model, const hsi::HsiCube& cube, std::span<const Index> pixels,
                                unsigned workers) {
  std::vector<int> out(pixels.size(), 0);
  ssm::detail::parallel_for(pixels.size(), resolve_workers(workers), 1, [&](std::size_t i) {
    const auto patch = hsi::extract_window(cube, coord_of(cube, pixels[i]), model.config().patch_size);
    out[i] = model.predict(patch);
  });
  return out;
}

EvalReport evaluate(const Model& model, const hsi::HsiCube& cube, std::span<const Index> test_pixels,
                    unsigned workers) {
  if (test_pixels.empty()) throw UsageError("evaluate: empty test set");
  const auto start = std::chrono::steady_clock::now();
  const std::vector<int> truth = labels_of(cube, test_pixels);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 0) throw UsageError("evaluate: test pixel " + std::to_string(test_pixels[i]) + " is unlabeled");
  }
  const std::vector<int> pred = predict_pixels(model, cube, test_pixels, workers);
  EvalReport report = report_from_confusion(confusion_matrix(truth, pred, cube.class_count));
  report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const auto probe = hsi::extract_window(cube, coord_of(cube, test_pixels[0]), model.config().patch_size);
  ad::reset_flops();
  {
    ad::NoGradGuard no_grad;
    (void)model.forward(probe);
  }
  report.flops_per_sample = static_cast<double>(ad::flop_count());
  return report;
}

TrainResult train(Model& model, const hsi::HsiCube& cube, const hsi::Splits& splits, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (splits.train.empty()) throw UsageError("train: empty training split");
  if (cube.class_count != model.config().class_count) {
    throw ConfigError("cube has " + std::to_string(cube.class_count) + " classes, model expects " +
                      std::to_string(model.config().class_count));
  }
  const Index side = model.config().patch_size;
  std::vector<hsi::PatchSample> train_patches;
  train_patches.reserve(splits.train.size());
  for (Index p : splits.train) train_patches.push_back(hsi::extract_patch(cube, coord_of(cube, p), side));
  const std::vector<int> val_truth = labels_of(cube, splits.val);

  const unsigned workers = resolve_workers(cfg.workers);
  const auto n_train = static_cast<Index>(train_patches.size());
  const Index batch_cap = std::min(cfg.batch, n_train);
  std::vector<Model> replicas;
  for (unsigned w = 0; w < std::min<Index>(workers, batch_cap); ++w) replicas.push_back(model.clone());

  auto& params = model.parameters();
  const Index flat = flat_size(params);
  std::vector<std::vector<double>> slots(static_cast<std::size_t>(batch_cap), std::vector<double>(flat));
  std::vector<double> losses(static_cast<std::size_t>(batch_cap));
  const ad::AdamConfig adam{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};

  std::vector<Index> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5bd1e995ULL);

  TrainResult result;
  std::vector<ad::Matrix> best;
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    int batch_no = 0;
    for (Index start = 0; start < n_train; start += cfg.batch, ++batch_no) {
      const Index count = std::min(cfg.batch, n_train - start);
      for (auto& r : replicas) r.copy_values_from(model);

      // Each replica handles a contiguous block of the batch.
      const auto nrep = static_cast<Index>(replicas.size());
      const Index chunk = (count + nrep - 1) / nrep;
      auto run = [&](Index w) {
        Model& rep = replicas[static_cast<std::size_t>(w)];
        auto& rp = rep.parameters();
        for (Index i = w * chunk; i < std::min(count, (w + 1) * chunk); ++i) {
          const Index pos = start + i;
          const auto& patch = train_patches[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])];
          auto rng = sample_rng(cfg.seed, epoch, pos);
          ForwardOptions opt{cfg.dropout, &rng};
          ad::Tensor loss = ad::cross_entropy(rep.forward(patch, opt), patch.label - 1);
          losses[static_cast<std::size_t>(i)] = loss.item();
          ad::backward(loss);
          double* slot = slots[static_cast<std::size_t>(i)].data();
          for (auto& p : rp) {
            const ad::Matrix& g = p.tensor.grad();
            std::copy(g.data(), g.data() + g.size(), slot);
            slot += g.size();
          }
          ad::zero_grad(rp);
        }
      };
      {
        std::vector<std::jthread> pool;
        for (Index w = 1; w < nrep; ++w) pool.emplace_back(run, w);
        run(0);
      }

      for (Index i = 0; i < count; ++i) {
        const double l = losses[static_cast<std::size_t>(i)];
        if (!std::isfinite(l)) {
          const Index pixel = splits.train[static_cast<std::size_t>(order[static_cast<std::size_t>(start + i)])];
          std::ostringstream msg;
          msg << "non-finite loss in epoch " << epoch << ", batch " << batch_no << " (train pixel " << pixel << ")";
          throw TrainingError(msg.str());
        }
        loss_sum += l;
      }
      const double inv = 1.0 / static_cast<double>(count);
      Index offset = 0;
      for (auto& p : params) {
        ad::Matrix& g = p.tensor.mutable_grad();
        g.setZero();
        for (Index i = 0; i < count; ++i) {
          const double* slot = slots[static_cast<std::size_t>(i)].data() + offset;
          g += Eigen::Map<const ad::Matrix>(slot, g.rows(), g.cols());
        }
        g *= inv;
        offset += g.size();
      }
      ad::adam_step(params, adam);
    }

    EpochLog entry{epoch, loss_sum / static_cast<double>(n_train), 0.0};
    if (!splits.val.empty()) entry.val_oa = accuracy(val_truth, predict_pixels(model, cube, splits.val, workers));
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);

    if (splits.val.empty() || entry.val_oa > result.best_val_oa) {
      result.best_val_oa = entry.val_oa;
      result.best_epoch = epoch;
      since_best = 0;
      best.clear();
      for (const auto& p : params) best.push_back(p.tensor.value());
      if (!cfg.checkpoint_path.empty()) {
        nlohmann::json meta = {{"model", to_json(model.config())}, {"epoch", epoch}, {"val_oa", entry.val_oa}};
        ad::save_checkpoint(cfg.checkpoint_path, params, meta);
      }
    } else {
      ++since_best;
    }
    if (result.best_val_oa >= cfg.target_val_oa) break;
    if (cfg.patience > 0 && since_best >= cfg.patience) break;
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i].tensor.mutable_value() = best[i];
  return result;
}

void write_train_log_csv(std::ostream& out, std::span<const EpochLog> log) {
  out << "epoch,train_loss,val_oa\n";
  out << std::setprecision(17);
  for (const auto& e : log) out << e.epoch << ',' << e.train_loss << ',' << e.val_oa << '\n';
}

}  // namespace graphmamba::core
