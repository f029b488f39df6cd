#include "deeper/train/metrics.hpp"

#include <cstdio>

#include "deeper/error.hpp"

namespace deeper::train {

nlohmann::json EvalReport::to_json() const {
  return {{"precision", precision}, {"recall", recall}, {"f1", f1},
          {"tp", tp},               {"fp", fp},         {"fn", fn},
          {"tn", tn}};
}

EvalReport report_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  EvalReport r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.tn = tn;
  const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double rec = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  r.precision = 100.0 * p;
  r.recall = 100.0 * rec;
  r.f1 = p + rec > 0.0 ? 100.0 * 2.0 * p * rec / (p + rec) : 0.0;
  return r;
}

EvalReport evaluate_predictions(std::span<const double> probabilities, std::span<const int> gold,
                                double threshold) {
  if (probabilities.empty()) throw ConfigError("cannot evaluate an empty set of pairs");
  if (probabilities.size() != gold.size()) {
    throw ShapeError("evaluate: " + std::to_string(probabilities.size()) + " predictions for " +
                     std::to_string(gold.size()) + " labels");
  }
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] != 0 && gold[i] != 1) throw ConfigError("evaluate: pair without a 0/1 label");
    const bool predicted = probabilities[i] >= threshold;
    if (predicted) {
      gold[i] ? ++tp : ++fp;
    } else {
      gold[i] ? ++fn : ++tn;
    }
  }
  return report_from_counts(tp, fp, fn, tn);
}

MetricsLog::MetricsLog(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  out_.open(path, std::ios::app);
  if (!out_) throw IoError("cannot open metrics file '" + path.string() + "'");
  if (fresh) out_ << header() << '\n' << std::flush;
}

void MetricsLog::add(const EpochMetrics& row) {
  rows_.push_back(row);
  if (out_.is_open()) out_ << format(row) << '\n' << std::flush;
  if (observer_) observer_(row);
}

std::string MetricsLog::header() { return "epoch,split,precision,recall,f1,loss"; }

std::string MetricsLog::format(const EpochMetrics& row) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%s,%.4f,%.4f,%.4f,%.8f", row.epoch, row.split.c_str(),
                row.report.precision, row.report.recall, row.report.f1, row.loss);
  return buf;
}

std::string MetricsLog::csv() const {
  std::string out = header() + "\n";
  for (const auto& r : rows_) out += format(r) + "\n";
  return out;
}

}  // namespace deeper::train
