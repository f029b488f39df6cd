#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "deeper/active/sampling.hpp"
#include "deeper/model/er_model.hpp"
#include "deeper/train/trainer.hpp"
#include "json.hpp"

namespace deeper::active {

// Identity of a candidate pair in pools, labels, journals and the HTTP API.
std::string pair_id(const std::string& left_id, const std::string& right_id);
std::string pair_id(const train::Example& ex);

enum class Provenance { kHuman, kProxyPositive, kProxyNegative, kSeed };
std::string to_string(Provenance p);

struct LabeledEntry {
  int label = 0;
  Provenance provenance = Provenance::kHuman;
  std::size_t model_version = 0;  // model that proposed a proxy label
};

struct ALConfig {
  std::size_t K = 20;          // human labels per iteration
  std::size_t iterations = 10;  // T
  std::size_t max_epochs = 20;  // I, per iteration
  Strategy strategy = Strategy::kHighConfidencePartition;
  // Keep proxy-labeled pairs in the pool so they can later get a human label.
  bool retain_high_confidence = false;
  train::TrainConfig train;  // batch size, Adam settings and seed; epochs is ignored

  std::size_t k() const { return K / 2; }
  // Throws ConfigError unless K is even and >= 2, T >= 1 and I >= 1.
  void validate() const;
  nlohmann::json to_json() const;
  static ALConfig from_json(const nlohmann::json& j);
};

struct IterationLog {
  std::size_t iteration = 0;  // 1-based
  std::size_t human_labels = 0;
  std::size_t proxy_labels = 0;
  // Human picks by prediction at selection time versus the label given.
  std::size_t fp = 0, tp = 0, fn = 0, tn = 0;
  std::size_t proxy_errors = 0;  // proxies disagreeing with gold, when known
  bool proxy_errors_known = false;
  std::size_t shortfall = 0;
  std::size_t pool_size = 0;     // after the iteration
  std::size_t labeled_size = 0;  // after the iteration
  std::size_t best_epoch = 0;
  double f1_on_labeled = 0.0;
  std::vector<double> f1_trajectory;  // F1 on the labeled set per epoch
  std::optional<double> test_f1;

  nlohmann::json to_json() const;
};

// iter,human_labels,proxy_labels,fp,tp,fn,tn,f1_on_labeled,test_f1
std::string iteration_csv_header();
std::string iteration_csv_row(const IterationLog& log);
std::string iteration_csv(std::span<const IterationLog> logs);

class Annotator {
 public:
  virtual ~Annotator() = default;
  // Must return a 0/1 label for every requested id.
  virtual std::map<std::string, int> label(const std::vector<std::string>& ids) = 0;
};

// Answers from ground truth, simulating a human.
class OracleAnnotator : public Annotator {
 public:
  explicit OracleAnnotator(std::map<std::string, int> gold) : gold_(std::move(gold)) {}
  std::map<std::string, int> label(const std::vector<std::string>& ids) override;
  std::size_t requests() const { return requests_; }

 private:
  std::map<std::string, int> gold_;
  std::size_t requests_ = 0;
};

// Gold labels of the examples that carry one, keyed by pair id.
std::map<std::string, int> gold_labels(std::span<const train::Example> examples);

// Runs the iterative loop on a borrowed model. Between select() and
// complete() nothing is mutated, so a failed annotation leaves the state
// untouched.
class ActiveLearner {
 public:
  // `pool` examples need no labels; any labels they carry are used only for
  // proxy-error bookkeeping. `test`, when non-empty, is evaluated after every
  // iteration.
  ActiveLearner(model::ErModel& model, std::vector<train::Example> pool, ALConfig config,
                std::vector<train::Example> test = {});

  const ALConfig& config() const { return config_; }
  std::size_t iteration() const { return iteration_; }
  std::size_t model_version() const { return model_version_; }
  std::size_t human_labels_used() const { return human_used_; }
  bool finished() const;

  std::vector<std::string> pool_ids() const;
  std::size_t pool_size() const { return pool_.size(); }
  const std::map<std::string, LabeledEntry>& labeled() const { return labeled_; }
  const std::vector<IterationLog>& logs() const { return logs_; }
  const train::Example& example(const std::string& id) const;
  // Probabilities of the pool under the current model (cached per version).
  const std::vector<PoolEntry>& pool_probabilities();

  // Selection for the next iteration; repeated calls return the same result
  // until complete() runs. Throws ConfigError when finished.
  const SelectionResult& select();
  // Applies human labels for exactly the pending human picks, adds proxies,
  // retrains and logs. Throws ConfigError (without mutating) on missing,
  // extra or non-0/1 labels.
  const IterationLog& complete(const std::map<std::string, int>& human_labels);
  const IterationLog& iterate(Annotator& annotator);
  // Iterates until T iterations ran or the pool is exhausted.
  const std::vector<IterationLog>& run(Annotator& annotator);

  // Receives every train/dev metrics row while complete() retrains.
  void set_epoch_observer(std::function<void(const train::EpochMetrics&)> observer) {
    epoch_observer_ = std::move(observer);
  }

 private:
  void validate_labels(const std::map<std::string, int>& human_labels) const;

  model::ErModel& model_;
  ALConfig config_;
  std::vector<train::Example> examples_;
  std::unordered_map<std::string, std::size_t> index_;
  std::set<std::string> pool_;
  std::map<std::string, LabeledEntry> labeled_;
  std::vector<train::Example> test_;
  std::vector<IterationLog> logs_;
  std::vector<PoolEntry> cache_;
  std::optional<std::size_t> cache_version_;
  std::optional<SelectionResult> pending_;
  std::size_t iteration_ = 0;
  std::size_t model_version_ = 0;
  std::size_t human_used_ = 0;
  std::function<void(const train::EpochMetrics&)> epoch_observer_;
};

// Baseline: `budget` pairs drawn uniformly from the pool with their gold
// labels, then the same per-iteration schedule (I epochs, selection by F1
// on the labeled sample).
train::TrainResult train_random_sample(model::ErModel& model,
                                       std::span<const train::Example> pool, std::size_t budget,
                                       const ALConfig& config, std::uint64_t sample_seed);

}  // namespace deeper::active
