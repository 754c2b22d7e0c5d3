#include "graphmamba/core/metrics.hpp"

#include "graphmamba/errors.hpp"

#include <ostream>

namespace graphmamba::core {

Confusion confusion_matrix(std::span<const int> truth, std::span<const int> predicted, int class_count) {
  if (truth.size() != predicted.size()) throw DimensionError("truth and prediction counts differ");
  if (class_count < 1) throw ConfigError("class_count must be positive");
  Confusion c = Confusion::Zero(class_count, class_count);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 1 || t > class_count || p < 1 || p > class_count) {
      throw UsageError("class id outside [1, " + std::to_string(class_count) + "] at sample " + std::to_string(i));
    }
    ++c(t - 1, p - 1);
  }
  return c;
}

EvalReport report_from_confusion(const Confusion& confusion) {
  if (confusion.rows() != confusion.cols()) throw DimensionError("confusion matrix must be square");
  if ((confusion.array() < 0).any()) throw ValidationError("confusion matrix has negative entries");
  const std::int64_t total = confusion.sum();
  if (total == 0) throw UsageError("empty test set");

  EvalReport r;
  r.confusion = confusion;
  r.test_count = total;
  const auto n = static_cast<double>(total);
  const Eigen::Index k = confusion.rows();
  r.oa = static_cast<double>(confusion.trace()) / n;

  double recall_sum = 0.0, expected = 0.0;
  int present = 0;
  r.per_class_accuracy.assign(static_cast<std::size_t>(k), 0.0);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto row = static_cast<double>(confusion.row(i).sum());
    const auto col = static_cast<double>(confusion.col(i).sum());
    expected += row * col;
    if (row > 0) {
      const double recall = static_cast<double>(confusion(i, i)) / row;
      r.per_class_accuracy[static_cast<std::size_t>(i)] = recall;
      recall_sum += recall;
      ++present;
    }
  }
  r.aa = recall_sum / present;
  const double p_e = expected / (n * n);
  // Degenerate marginals (one class everywhere): agreement is either perfect or none.
  if (p_e >= 1.0) {
    r.kappa = r.oa == 1.0 ? 1.0 : 0.0;
  } else {
    r.kappa = (r.oa - p_e) / (1.0 - p_e);
  }
  return r;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json conf = nlohmann::json::array();
  for (Eigen::Index i = 0; i < report.confusion.rows(); ++i) {
    std::vector<std::int64_t> row(static_cast<std::size_t>(report.confusion.cols()));
    for (Eigen::Index j = 0; j < report.confusion.cols(); ++j) row[static_cast<std::size_t>(j)] = report.confusion(i, j);
    conf.push_back(row);
  }
  return {{"oa", report.oa},
          {"aa", report.aa},
          {"kappa", report.kappa},
          {"per_class_accuracy", report.per_class_accuracy},
          {"confusion", conf},
          {"test_count", report.test_count},
          {"flops_per_sample", report.flops_per_sample}};
}

void write_confusion_csv(std::ostream& out, const Confusion& confusion) {
  out << "true\\pred";
  for (Eigen::Index j = 0; j < confusion.cols(); ++j) out << ',' << j + 1;
  out << '\n';
  for (Eigen::Index i = 0; i < confusion.rows(); ++i) {
    out << i + 1;
    for (Eigen::Index j = 0; j < confusion.cols(); ++j) out << ',' << confusion(i, j);
    out << '\n';
  }
}

}  // namespace graphmamba::core
