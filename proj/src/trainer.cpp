#include "deeper/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <unordered_map>

#include "deeper/error.hpp"
#include "deeper/log.hpp"
#include "deeper/parallel.hpp"
#include "deeper/random.hpp"

namespace deeper::train {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("Adam betas must be in [0, 1)");
  }
}

json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"epochs", epochs},
          {"lr", adam.lr},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"eps", adam.eps},
          {"seed", seed},
          {"shuffle", shuffle}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "batch_size") {
        c.batch_size = value.get<std::size_t>();
      } else if (key == "epochs") {
        c.epochs = value.get<std::size_t>();
      } else if (key == "lr") {
        c.adam.lr = value.get<double>();
      } else if (key == "beta1") {
        c.adam.beta1 = value.get<double>();
      } else if (key == "beta2") {
        c.adam.beta2 = value.get<double>();
      } else if (key == "eps") {
        c.adam.eps = value.get<double>();
      } else if (key == "seed") {
        c.seed = value.get<std::uint64_t>();
      } else if (key == "shuffle") {
        c.shuffle = value.get<bool>();
      } else {
        throw ConfigError("unknown training config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad training config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<Example> prepare_examples(const model::ErModel& model,
                                      const data::CandidateSet& candidates,
                                      const data::EntityTable& left,
                                      const data::EntityTable& right, std::size_t dataset,
                                      std::size_t threads) {
  data::validate_candidates(candidates, left, right);
  auto prepare_side = [&](const data::EntityTable& table, bool is_left) {
    std::vector<std::string> ids;
    std::unordered_map<std::string, std::size_t> slot;
    for (const auto& p : candidates.pairs) {
      const std::string& id = is_left ? p.left : p.right;
      if (slot.emplace(id, ids.size()).second) ids.push_back(id);
    }
    std::vector<model::PreparedRecordPtr> records(ids.size());
    parallel_for(ids.size(), threads,
                 [&](std::size_t i) { records[i] = model.prepare_record(table.at(ids[i]).values); });
    std::unordered_map<std::string, model::PreparedRecordPtr> out;
    for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], records[i]);
    return out;
  };
  const auto lrec = prepare_side(left, true);
  const auto rrec = prepare_side(right, false);
  std::vector<Example> examples;
  examples.reserve(candidates.size());
  for (const auto& p : candidates.pairs) {
    examples.push_back(Example{{lrec.at(p.left), rrec.at(p.right)},
                               p.label ? *p.label : -1,
                               dataset,
                               p.left,
                               p.right});
  }
  return examples;
}

ParameterSnapshot snapshot(const ad::ParameterSet& params) {
  ParameterSnapshot s;
  for (const auto& p : params.all()) s.push_back(p.value);
  return s;
}

void restore(ad::ParameterSet& params, const ParameterSnapshot& values) {
  if (values.size() != params.size()) throw ShapeError("snapshot does not match parameter set");
  for (std::size_t i = 0; i < values.size(); ++i) params.all()[i].value = values[i];
}

namespace {

struct ExamplePass {
  ad::Gradients gradients;
  double matching_loss = 0.0;
  double dataset_loss = 0.0;
  double probability = 0.0;
};

ExamplePass example_pass(const model::ErModel& model, const Example& ex, LossTerms terms) {
  ad::Tape tape(model.parameters());
  const auto g = model.forward(tape, ex.pair);
  ExamplePass out;
  out.probability = ad::softmax(tape.value(g.matching_logits).values())[model::kMatch];
  std::vector<ad::Var> parts;
  if (terms != LossTerms::kDatasetOnly) {
    if (ex.label != 0 && ex.label != 1) {
      throw ConfigError("training pair (" + ex.left_id + ", " + ex.right_id + ") has no label");
    }
    parts.push_back(tape.softmax_nll(g.matching_logits, static_cast<std::size_t>(ex.label)));
    out.matching_loss = tape.value(parts.back()).item();
  }
  if (terms != LossTerms::kMatching) {
    const std::size_t datasets = model.config().num_datasets;
    if (ex.dataset >= datasets) {
      throw ConfigError("dataset id " + std::to_string(ex.dataset) + " outside the " +
                        std::to_string(datasets) + "-way dataset classifier");
    }
    parts.push_back(tape.softmax_nll(model.dataset_logits(tape, g.record_similarity), ex.dataset));
    out.dataset_loss = tape.value(parts.back()).item();
  }
  out.gradients = tape.backward(tape.sum(parts));
  return out;
}

void check_labels(std::span<const Example> examples, const std::string& what) {
  for (const auto& ex : examples) {
    if (ex.label != 0 && ex.label != 1) {
      throw ConfigError(what + " pair (" + ex.left_id + ", " + ex.right_id + ") has no label");
    }
  }
}

void warn_single_class(std::span<const Example> examples) {
  std::size_t positives = 0;
  for (const auto& ex : examples) positives += ex.label == 1;
  if (positives == 0 || positives == examples.size()) {
    warn("training set holds a single class (" + std::to_string(positives) + " matches of " +
         std::to_string(examples.size()) + ")");
  }
}

std::vector<int> labels_of(std::span<const Example> examples) {
  std::vector<int> y;
  for (const auto& ex : examples) y.push_back(ex.label);
  return y;
}

double nll_from_probability(double p_match, int label) {
  const double p = label == 1 ? p_match : 1.0 - p_match;
  return -std::log(std::max(p, 1e-300));
}

struct DevResult {
  EvalReport report;
  double loss = 0.0;
};

DevResult evaluate_dev(const model::ErModel& model, std::span<const Example> dev,
                       std::size_t threads) {
  const auto probs = predict(model, dev, threads);
  DevResult r;
  const auto gold = labels_of(dev);
  r.report = evaluate_predictions(probs, gold);
  for (std::size_t i = 0; i < probs.size(); ++i) r.loss += nll_from_probability(probs[i], gold[i]);
  r.loss /= static_cast<double>(probs.size());
  return r;
}

// Shared epoch loop. `step` runs one optimizer step for the batch and
// returns the batch result of the labeled (matching) part.
template <class Step>
TrainResult run_epochs(model::ErModel& model, std::span<const Example> train,
                       std::span<const Example> dev, const TrainConfig& config, MetricsLog* log,
                       Rng& rng, Step&& step) {
  auto& params = model.parameters();
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  TrainResult result;
  double best_f1 = -1.0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle) rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::vector<double> probs;
    std::vector<int> gold;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const Example*> batch;
      for (std::size_t k = start; k < end; ++k) batch.push_back(&train[order[k]]);
      const BatchResult r = step(std::span<const Example* const>(batch));
      loss_sum += r.matching_loss * static_cast<double>(batch.size());
      for (std::size_t k = 0; k < batch.size(); ++k) {
        probs.push_back(r.match_probabilities[k]);
        gold.push_back(batch[k]->label);
      }
    }
    if (!params.all_finite()) {
      throw NumericError("non-finite parameters after epoch " + std::to_string(epoch));
    }
    EpochMetrics train_row{epoch, "train", evaluate_predictions(probs, gold),
                           loss_sum / static_cast<double>(train.size())};
    const DevResult d = evaluate_dev(model, dev, config.threads);
    EpochMetrics dev_row{epoch, "dev", d.report, d.loss};
    result.history.push_back(train_row);
    result.history.push_back(dev_row);
    if (log) {
      log->add(train_row);
      log->add(dev_row);
    }
    if (d.report.f1 > best_f1) {
      best_f1 = d.report.f1;
      result.best = Checkpoint{snapshot(params), epoch, d.report};
    }
  }
  restore(params, result.best.parameters);
  return result;
}

}  // namespace

BatchResult batch_gradients(const model::ErModel& model, std::span<const Example* const> batch,
                            LossTerms terms, std::size_t threads) {
  if (batch.empty()) throw ConfigError("empty batch");
  std::vector<std::optional<ExamplePass>> passes(batch.size());
  parallel_for(batch.size(), threads,
               [&](std::size_t i) { passes[i] = example_pass(model, *batch[i], terms); });
  BatchResult out;
  out.gradients = std::move(passes[0]->gradients);
  for (std::size_t i = 1; i < passes.size(); ++i) out.gradients.accumulate(passes[i]->gradients);
  const double n = static_cast<double>(batch.size());
  out.gradients.scale(1.0 / n);
  for (const auto& p : passes) {
    out.matching_loss += p->matching_loss;
    out.dataset_loss += p->dataset_loss;
    out.match_probabilities.push_back(p->probability);
  }
  out.matching_loss /= n;
  out.dataset_loss /= n;
  return out;
}

std::vector<double> predict(const model::ErModel& model, std::span<const Example> examples,
                            std::size_t threads) {
  std::vector<double> probs(examples.size());
  parallel_for(examples.size(), threads,
               [&](std::size_t i) { probs[i] = model.match_probability(examples[i].pair); });
  return probs;
}

EvalReport evaluate(const model::ErModel& model, std::span<const Example> examples,
                    double threshold, std::size_t threads) {
  if (examples.empty()) throw ConfigError("cannot evaluate an empty set of pairs");
  check_labels(examples, "evaluation");
  return evaluate_predictions(predict(model, examples, threads), labels_of(examples), threshold);
}

double mean_matching_loss(const model::ErModel& model, std::span<const Example> examples,
                          std::size_t threads) {
  if (examples.empty()) throw ConfigError("cannot compute the loss of an empty set");
  check_labels(examples, "evaluation");
  return evaluate_dev(model, examples, threads).loss;
}

TrainResult train_supervised(model::ErModel& model, std::span<const Example> train,
                             std::span<const Example> dev, const TrainConfig& config,
                             MetricsLog* log) {
  config.validate();
  if (train.empty()) throw ConfigError("empty training set");
  if (dev.empty()) throw ConfigError("empty dev set");
  check_labels(train, "training");
  check_labels(dev, "dev");
  warn_single_class(train);
  Rng rng(config.seed);
  ad::AdamState adam(model.parameters(), config.adam);
  return run_epochs(model, train, dev, config, log, rng, [&](std::span<const Example* const> batch) {
    BatchResult r = batch_gradients(model, batch, LossTerms::kMatching, config.threads);
    ad::adam_step(model.parameters(), r.gradients, adam);
    return r;
  });
}

TrainResult train_adversarial(model::ErModel& model, std::span<const Example> source_train,
                              std::span<const Example> source_dev,
                              std::span<const Example> target, const TrainConfig& config,
                              MetricsLog* log) {
  config.validate();
  if (target.empty()) {
    warn("no target pairs for dataset adaptation; training on the sources only");
    return train_supervised(model, source_train, source_dev, config, log);
  }
  if (!model.dataset_head()) {
    throw ConfigError("dataset adaptation needs a model with a dataset classifier");
  }
  if (source_train.empty()) throw ConfigError("empty source training set");
  if (source_dev.empty()) throw ConfigError("empty source dev set");
  check_labels(source_train, "source training");
  check_labels(source_dev, "source dev");
  warn_single_class(source_train);
  const std::size_t target_id = target[0].dataset;
  for (const auto& t : target) {
    if (t.dataset != target_id) throw ConfigError("target pairs span several dataset ids");
  }
  for (const auto& s : source_train) {
    if (s.dataset == target_id) {
      throw ConfigError("target and source share dataset id " + std::to_string(target_id));
    }
  }

  Rng rng(config.seed);
  ad::AdamState adam(model.parameters(), config.adam);
  std::vector<std::size_t> target_order(target.size());
  for (std::size_t i = 0; i < target_order.size(); ++i) target_order[i] = i;
  std::size_t cursor = target.size();  // forces a shuffle before the first target batch
  return run_epochs(
      model, source_train, source_dev, config, log, rng, [&](std::span<const Example* const> batch) {
        BatchResult r =
            batch_gradients(model, batch, LossTerms::kMatchingAndDataset, config.threads);
        std::vector<const Example*> target_batch;
        while (target_batch.size() < config.batch_size && target_batch.size() < target.size()) {
          if (cursor == target.size()) {
            if (config.shuffle) rng.shuffle(std::span<std::size_t>(target_order));
            cursor = 0;
          }
          target_batch.push_back(&target[target_order[cursor++]]);
        }
        BatchResult t = batch_gradients(model, target_batch, LossTerms::kDatasetOnly,
                                        config.threads);
        r.gradients.accumulate(t.gradients);
        ad::adam_step(model.parameters(), r.gradients, adam);
        return r;
      });
}

}  // namespace deeper::train
