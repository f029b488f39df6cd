#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace deeper::train {

inline constexpr double kDecisionThreshold = 0.5;

// Precision, recall and F1 in percent.
struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  nlohmann::json to_json() const;
};

// Percent metrics from confusion counts. P (R) is 0 with no predicted
// (actual) positives; F1 is 0 when P + R is 0.
EvalReport report_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn);
// Predicts a match iff probability >= threshold. Throws ConfigError on empty
// input or a label other than 0/1.
EvalReport evaluate_predictions(std::span<const double> probabilities, std::span<const int> gold,
                                double threshold = kDecisionThreshold);

struct EpochMetrics {
  std::size_t epoch = 0;
  std::string split;
  EvalReport report;
  double loss = 0.0;
};

// epoch,split,precision,recall,f1,loss with fixed formatting. When a path is
// given, rows are appended to it as they arrive.
class MetricsLog {
 public:
  MetricsLog() = default;
  explicit MetricsLog(const std::filesystem::path& path);

  void add(const EpochMetrics& row);
  const std::vector<EpochMetrics>& rows() const { return rows_; }
  // Called after every added row, e.g. to report progress.
  void set_observer(std::function<void(const EpochMetrics&)> observer) {
    observer_ = std::move(observer);
  }
  std::string csv() const;

  static std::string header();
  static std::string format(const EpochMetrics& row);

 private:
  std::vector<EpochMetrics> rows_;
  std::ofstream out_;
  std::function<void(const EpochMetrics&)> observer_;
};

}  // namespace deeper::train
