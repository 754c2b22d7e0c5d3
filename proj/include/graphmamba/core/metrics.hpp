#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace graphmamba::core {

// Rows are true classes, columns predicted classes.
using Confusion = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

struct EvalReport {
  Confusion confusion;
  std::vector<double> per_class_accuracy;  // recall per class; NaN-free, absent classes report 0
  double oa = 0.0;
  double aa = 0.0;
  double kappa = 0.0;
  double runtime_seconds = 0.0;
  double flops_per_sample = 0.0;
  std::int64_t test_count = 0;
};

// truth and predicted are 1-based class ids.
Confusion confusion_matrix(std::span<const int> truth, std::span<const int> predicted, int class_count);

// OA, AA (mean recall over classes that occur in the truth), Cohen's kappa.
EvalReport report_from_confusion(const Confusion& confusion);

// Wall-clock runtime is left out so that identical runs produce identical bytes.
nlohmann::json to_json(const EvalReport& report);
void write_confusion_csv(std::ostream& out, const Confusion& confusion);

}  // namespace graphmamba::core
