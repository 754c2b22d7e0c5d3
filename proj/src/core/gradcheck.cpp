#include "graphmamba/core/gradcheck.hpp"

#include "graphmamba/ad/ops.hpp"
#include "graphmamba/errors.hpp"

#include <algorithm>
#include <cmath>

namespace graphmamba::core {

namespace {

struct Probe {
  double loss;
  std::uint64_t pattern;
};

Probe probe(const std::function<ad::Tensor()>& loss) {
  ad::NoGradGuard no_grad;
  ad::ActivationTrace trace;
  const double value = loss().item();
  return {value, trace.fingerprint()};
}

}  // namespace

GradCheckReport check_gradients(std::span<ad::Parameter> params, const std::function<ad::Tensor()>& loss,
                                const GradCheckOptions& opt) {
  if (!(opt.h > 0.0) || !(opt.tolerance > 0.0)) throw ConfigError("gradient check needs positive h and tolerance");
  ad::zero_grad(params);
  ad::backward(loss());
  std::vector<ad::Matrix> analytic;
  for (const auto& p : params) analytic.push_back(p.tensor.grad());
  ad::zero_grad(params);
  const std::uint64_t base_pattern = probe(loss).pattern;

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    ad::Parameter& prm = params[k];
    if (!prm.trainable) continue;
    ad::Matrix& value = prm.tensor.mutable_value();
    for (Index i = 0; i < value.size(); ++i) {
      double& x = value.data()[i];
      const double saved = x;
      double h = opt.h, numeric = 0.0;
      for (int attempt = 0;; ++attempt) {
        x = saved + h;
        const Probe plus = probe(loss);
        x = saved - h;
        const Probe minus = probe(loss);
        x = saved;
        numeric = (plus.loss - minus.loss) / (2.0 * h);
        const bool smooth = plus.pattern == base_pattern && minus.pattern == base_pattern;
        if (smooth || attempt >= opt.max_shrinks) break;
        h /= 10.0;
        ++report.shrunk;
      }
      const double a = analytic[k].data()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opt.floor});
      GradCheckEntry entry{prm.name, i, a, numeric, rel};
      ++report.checked;
      if (rel > report.max_rel_err || report.checked == 1) {
        report.max_rel_err = std::max(report.max_rel_err, rel);
        report.worst = entry;
      }
      if (!(rel < opt.tolerance)) report.failures.push_back(entry);
    }
  }
  return report;
}

GradCheckReport check_model_gradients(const ModelConfig& cfg, const GradCheckOptions& opt) {
  Model model(cfg);
  std::mt19937_64 rng(cfg.seed ^ 0xc0ffeeULL);
  std::normal_distribution<double> jitter(0.0, 0.1);
  for (auto& p : model.parameters()) {
    ad::Matrix& v = p.tensor.mutable_value();
    for (Index i = 0; i < v.size(); ++i) v.data()[i] += jitter(rng);
  }

  hsi::PatchSample patch;
  patch.side = cfg.patch_size;
  patch.window.resize(cfg.patch_size * cfg.patch_size, cfg.bands);
  std::uniform_real_distribution<double> reflect(0.0, 1.0);
  for (Index i = 0; i < patch.window.size(); ++i) patch.window.data()[i] = reflect(rng);
  patch.label = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.class_count));

  auto loss = [&] { return ad::cross_entropy(model.forward(patch), patch.label - 1); };
  return check_gradients(model.parameters(), loss, opt);
}

}  // namespace graphmamba::core
