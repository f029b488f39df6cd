#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deeper/autodiff/adam.hpp"
#include "deeper/data/candidates.hpp"
#include "deeper/data/table.hpp"
#include "deeper/model/er_model.hpp"
#include "deeper/train/metrics.hpp"
#include "json.hpp"

namespace deeper::train {

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  ad::AdamConfig adam;
  std::uint64_t seed = 1;
  bool shuffle = true;
  std::size_t threads = 0;  // 0 = hardware concurrency; results do not depend on it

  // Throws ConfigError on batch_size or epochs of 0 or a non-positive lr.
  void validate() const;
  nlohmann::json to_json() const;
  // Unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
};

struct Example {
  model::PreparedPair pair;
  int label = -1;  // 1 match, 0 non-match, -1 unknown
  std::size_t dataset = 0;
  std::string left_id;
  std::string right_id;
};

// Embeds every record once and shares it between the pairs naming it.
std::vector<Example> prepare_examples(const model::ErModel& model,
                                      const data::CandidateSet& candidates,
                                      const data::EntityTable& left,
                                      const data::EntityTable& right, std::size_t dataset = 0,
                                      std::size_t threads = 0);

using ParameterSnapshot = std::vector<ad::Tensor>;
ParameterSnapshot snapshot(const ad::ParameterSet& params);
void restore(ad::ParameterSet& params, const ParameterSnapshot& values);

struct Checkpoint {
  ParameterSnapshot parameters;
  std::size_t epoch = 0;  // 1-based
  EvalReport dev;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochMetrics> history;
};

// Which losses one example contributes to a step.
enum class LossTerms { kMatching, kMatchingAndDataset, kDatasetOnly };

struct BatchResult {
  ad::Gradients gradients;  // gradient of the batch-mean loss
  double matching_loss = 0.0;  // batch mean, 0 for kDatasetOnly
  double dataset_loss = 0.0;   // batch mean, 0 for kMatching
  std::vector<double> match_probabilities;
};

// Per-example gradients are computed in parallel and summed in batch order.
BatchResult batch_gradients(const model::ErModel& model, std::span<const Example* const> batch,
                            LossTerms terms, std::size_t threads = 0);

std::vector<double> predict(const model::ErModel& model, std::span<const Example> examples,
                            std::size_t threads = 0);
EvalReport evaluate(const model::ErModel& model, std::span<const Example> examples,
                    double threshold = kDecisionThreshold, std::size_t threads = 0);
// Mean matching negative log-likelihood over labeled examples.
double mean_matching_loss(const model::ErModel& model, std::span<const Example> examples,
                          std::size_t threads = 0);

// Mini-batch Adam on the matching loss. After every epoch the dev set is
// evaluated; the best dev F1 epoch (earliest on ties) is restored into the
// model and returned. Rows "train" (running loss and predictions made during
// the epoch) and "dev" go to `log` when given.
TrainResult train_supervised(model::ErModel& model, std::span<const Example> train,
                             std::span<const Example> dev, const TrainConfig& config,
                             MetricsLog* log = nullptr);

// Dataset-adaptation training. Sources carry labels and dataset ids
// 0..S-1; target pairs carry dataset id S. Each step sums the matching and
// dataset losses of one source batch with the dataset loss of one target
// batch. Selection uses the source dev set. An empty target falls back to
// train_supervised with a warning.
TrainResult train_adversarial(model::ErModel& model, std::span<const Example> source_train,
                              std::span<const Example> source_dev,
                              std::span<const Example> target, const TrainConfig& config,
                              MetricsLog* log = nullptr);

}  // namespace deeper::train
