#include "deeper/active/learner.hpp"

#include <cstdio>

#include "deeper/error.hpp"
#include "deeper/random.hpp"

namespace deeper::active {

using nlohmann::json;

std::string pair_id(const std::string& left_id, const std::string& right_id) {
  return left_id + "|" + right_id;
}

std::string pair_id(const train::Example& ex) { return pair_id(ex.left_id, ex.right_id); }

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kHuman:
      return "human";
    case Provenance::kProxyPositive:
      return "proxy_positive";
    case Provenance::kProxyNegative:
      return "proxy_negative";
    case Provenance::kSeed:
      return "seed";
  }
  return "?";
}

void ALConfig::validate() const {
  if (K < 2 || K % 2 != 0) throw ConfigError("K must be even and >= 2, got " + std::to_string(K));
  if (iterations < 1) throw ConfigError("T (iterations) must be >= 1");
  if (max_epochs < 1) throw ConfigError("I (max epochs per iteration) must be >= 1");
  train::TrainConfig t = train;
  t.epochs = max_epochs;
  t.validate();
}

json ALConfig::to_json() const {
  json t = train.to_json();
  t.erase("epochs");
  return {{"K", K},
          {"iterations", iterations},
          {"max_epochs", max_epochs},
          {"strategy", active::to_string(strategy)},
          {"retain_high_confidence", retain_high_confidence},
          {"train", t}};
}

ALConfig ALConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("active-learning config must be a JSON object");
  ALConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "K") {
        c.K = value.get<std::size_t>();
      } else if (key == "iterations") {
        c.iterations = value.get<std::size_t>();
      } else if (key == "max_epochs") {
        c.max_epochs = value.get<std::size_t>();
      } else if (key == "strategy") {
        c.strategy = parse_strategy(value.get<std::string>());
      } else if (key == "retain_high_confidence") {
        c.retain_high_confidence = value.get<bool>();
      } else if (key == "train") {
        c.train = train::TrainConfig::from_json(value);
      } else {
        throw ConfigError("unknown active-learning config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad active-learning config: ") + e.what());
  }
  c.validate();
  return c;
}

json IterationLog::to_json() const {
  json j = {{"iteration", iteration},       {"human_labels", human_labels},
            {"proxy_labels", proxy_labels}, {"fp", fp},
            {"tp", tp},                     {"fn", fn},
            {"tn", tn},                     {"shortfall", shortfall},
            {"pool_size", pool_size},       {"labeled_size", labeled_size},
            {"best_epoch", best_epoch},     {"f1_on_labeled", f1_on_labeled},
            {"f1_trajectory", f1_trajectory}};
  j["test_f1"] = test_f1 ? json(*test_f1) : json(nullptr);
  j["proxy_errors"] = proxy_errors_known ? json(proxy_errors) : json(nullptr);
  return j;
}

std::string iteration_csv_header() {
  return "iter,human_labels,proxy_labels,fp,tp,fn,tn,f1_on_labeled,test_f1";
}

std::string iteration_csv_row(const IterationLog& log) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%zu,%zu,%zu,%zu,%.4f,", log.iteration,
                log.human_labels, log.proxy_labels, log.fp, log.tp, log.fn, log.tn,
                log.f1_on_labeled);
  std::string row = buf;
  if (log.test_f1) {
    std::snprintf(buf, sizeof buf, "%.4f", *log.test_f1);
    row += buf;
  }
  return row;
}

std::string iteration_csv(std::span<const IterationLog> logs) {
  std::string out = iteration_csv_header() + "\n";
  for (const auto& l : logs) out += iteration_csv_row(l) + "\n";
  return out;
}

std::map<std::string, int> OracleAnnotator::label(const std::vector<std::string>& ids) {
  std::map<std::string, int> out;
  for (const auto& id : ids) {
    auto it = gold_.find(id);
    if (it == gold_.end()) throw ConfigError("oracle has no gold label for pair '" + id + "'");
    out[id] = it->second;
  }
  requests_ += ids.size();
  return out;
}

std::map<std::string, int> gold_labels(std::span<const train::Example> examples) {
  std::map<std::string, int> gold;
  for (const auto& ex : examples) {
    if (ex.label == 0 || ex.label == 1) gold[pair_id(ex)] = ex.label;
  }
  return gold;
}

ActiveLearner::ActiveLearner(model::ErModel& model, std::vector<train::Example> pool,
                             ALConfig config, std::vector<train::Example> test)
    : model_(model), config_(std::move(config)), examples_(std::move(pool)), test_(std::move(test)) {
  config_.validate();
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    const std::string id = pair_id(examples_[i]);
    if (!index_.emplace(id, i).second) throw ConfigError("duplicate pair '" + id + "' in pool");
    pool_.insert(id);
  }
  if (pool_.empty()) throw ConfigError("active learning needs a non-empty unlabeled pool");
}

bool ActiveLearner::finished() const {
  return iteration_ >= config_.iterations || pool_.empty();
}

std::vector<std::string> ActiveLearner::pool_ids() const { return {pool_.begin(), pool_.end()}; }

const train::Example& ActiveLearner::example(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ConfigError("unknown pair '" + id + "'");
  return examples_[it->second];
}

const std::vector<PoolEntry>& ActiveLearner::pool_probabilities() {
  if (cache_version_ != model_version_ || cache_.size() != pool_.size()) {
    std::vector<train::Example> members;
    std::vector<std::string> ids(pool_.begin(), pool_.end());
    for (const auto& id : ids) members.push_back(example(id));
    const auto probs = train::predict(model_, members, config_.train.threads);
    cache_.clear();
    for (std::size_t i = 0; i < ids.size(); ++i) cache_.push_back({ids[i], probs[i]});
    cache_version_ = model_version_;
  }
  return cache_;
}

const SelectionResult& ActiveLearner::select() {
  if (pending_) return *pending_;
  if (finished()) throw ConfigError("active learning is finished");
  pending_ = active::select(pool_probabilities(), config_.strategy, config_.K);
  return *pending_;
}

void ActiveLearner::validate_labels(const std::map<std::string, int>& human_labels) const {
  if (!pending_) throw ConfigError("no pending selection; call select() first");
  const auto wanted = pending_->human();
  for (const auto& id : wanted) {
    auto it = human_labels.find(id);
    if (it == human_labels.end()) throw ConfigError("missing label for pair '" + id + "'");
    if (it->second != 0 && it->second != 1) {
      throw ConfigError("label for pair '" + id + "' must be 0 or 1");
    }
  }
  if (human_labels.size() != wanted.size()) {
    for (const auto& [id, label] : human_labels) {
      if (std::find(wanted.begin(), wanted.end(), id) == wanted.end()) {
        throw ConfigError("pair '" + id + "' was not selected for labeling");
      }
    }
  }
}

const IterationLog& ActiveLearner::complete(const std::map<std::string, int>& human_labels) {
  validate_labels(human_labels);
  const SelectionResult& sel = *pending_;

  // Work on copies and commit only after training succeeded.
  auto labeled = labeled_;
  auto pool = pool_;
  IterationLog log;
  log.iteration = iteration_ + 1;
  log.shortfall = sel.shortfall;
  for (const auto& id : sel.human()) {
    const int label = human_labels.at(id);
    const bool predicted = sel.probability.at(id) >= 0.5;
    if (predicted) {
      label ? ++log.tp : ++log.fp;
    } else {
      label ? ++log.fn : ++log.tn;
    }
    labeled[id] = {label, Provenance::kHuman, model_version_};
    pool.erase(id);
    ++log.human_labels;
  }
  log.proxy_errors_known = true;
  auto add_proxy = [&](const std::string& id, int label, Provenance provenance) {
    labeled[id] = {label, provenance, model_version_};
    if (!config_.retain_high_confidence) pool.erase(id);
    ++log.proxy_labels;
    const int gold = example(id).label;
    if (gold != 0 && gold != 1) {
      log.proxy_errors_known = false;
    } else if (gold != label) {
      ++log.proxy_errors;
    }
  };
  for (const auto& id : sel.hc_pos) add_proxy(id, 1, Provenance::kProxyPositive);
  for (const auto& id : sel.hc_neg) add_proxy(id, 0, Provenance::kProxyNegative);

  std::vector<train::Example> training;
  for (const auto& [id, entry] : labeled) {
    training.push_back(example(id));
    training.back().label = entry.label;
  }
  train::TrainConfig cfg = config_.train;
  cfg.epochs = config_.max_epochs;
  cfg.seed = splitmix64(config_.train.seed + iteration_);
  const auto before = train::snapshot(model_.parameters());
  train::TrainResult result;
  try {
    // Checkpoint selection on the labeled set itself (proxies included), as
    // the loop has no other labels; this can favour overfit epochs.
    train::MetricsLog progress;
    if (epoch_observer_) progress.set_observer(epoch_observer_);
    result = train::train_supervised(model_, training, training, cfg, &progress);
  } catch (...) {
    train::restore(model_.parameters(), before);
    throw;
  }

  labeled_ = std::move(labeled);
  pool_ = std::move(pool);
  human_used_ += log.human_labels;
  ++model_version_;
  ++iteration_;
  pending_.reset();

  log.best_epoch = result.best.epoch;
  log.f1_on_labeled = result.best.dev.f1;
  for (const auto& row : result.history) {
    if (row.split == "dev") log.f1_trajectory.push_back(row.report.f1);
  }
  if (!test_.empty()) log.test_f1 = train::evaluate(model_, test_, 0.5, config_.train.threads).f1;
  log.pool_size = pool_.size();
  log.labeled_size = labeled_.size();
  logs_.push_back(log);
  return logs_.back();
}

const IterationLog& ActiveLearner::iterate(Annotator& annotator) {
  const auto ids = select().human();
  const auto labels = annotator.label(ids);
  return complete(labels);
}

const std::vector<IterationLog>& ActiveLearner::run(Annotator& annotator) {
  while (!finished()) iterate(annotator);
  return logs_;
}

train::TrainResult train_random_sample(model::ErModel& model,
                                       std::span<const train::Example> pool, std::size_t budget,
                                       const ALConfig& config, std::uint64_t sample_seed) {
  config.validate();
  if (budget == 0) throw ConfigError("random-sampling budget must be >= 1");
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(sample_seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<train::Example> sample;
  for (std::size_t i = 0; i < std::min(budget, order.size()); ++i) {
    sample.push_back(pool[order[i]]);
  }
  train::TrainConfig cfg = config.train;
  cfg.epochs = config.max_epochs;
  return train::train_supervised(model, sample, sample, cfg);
}

}  // namespace deeper::active
