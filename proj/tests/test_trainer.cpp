#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "deeper/data/csv.hpp"
#include "deeper/error.hpp"
#include "deeper/log.hpp"
#include "deeper/random.hpp"
#include "deeper/train/metrics.hpp"
#include "deeper/train/trainer.hpp"
#include "temp_dir.hpp"
#include "train_fixture.hpp"

using namespace deeper;
using namespace deeper::train;
using deeper::testing::make_example;
using deeper::testing::separable_examples;
using deeper::testing::toy_model;

namespace {

bool same_parameters(const ad::ParameterSet& a, const ad::ParameterSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a.all()[i].value == b.all()[i].value)) return false;
  }
  return true;
}

bool all_zero(const ad::Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](double v) { return v == 0.0; });
}

std::vector<ad::ParamId> head_ids(const model::HighwayMlpParams& head) {
  std::vector<ad::ParamId> ids{head.out_w, head.out_b};
  for (const auto& l : head.layers) {
    ids.insert(ids.end(), {l.transform_w, l.transform_b, l.gate_w, l.gate_b});
  }
  return ids;
}

std::vector<const Example*> pointers(const std::vector<Example>& v) {
  std::vector<const Example*> out;
  for (const auto& e : v) out.push_back(&e);
  return out;
}

}  // namespace

TEST_CASE("train config defaults and parsing") {
  TrainConfig c;
  CHECK(c.batch_size == 16);
  CHECK(c.epochs == 20);
  CHECK(c.adam.lr == 0.001);
  CHECK(c.adam.beta1 == 0.9);
  CHECK(c.adam.beta2 == 0.999);
  auto parsed = TrainConfig::from_json({{"epochs", 3}, {"lr", 0.01}});
  CHECK(parsed.epochs == 3);
  CHECK(parsed.adam.lr == 0.01);
  CHECK(parsed.batch_size == 16);
  CHECK(TrainConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK_THROWS_AS(TrainConfig::from_json({{"epoch", 3}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"batch_size", 0}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json({{"epochs", "x"}}), ConfigError);
}

TEST_CASE("metric examples") {
  // TP=2, FP=1, FN=1.
  auto r = evaluate_predictions(std::vector<double>{0.9, 0.8, 0.7, 0.2, 0.1},
                                std::vector<int>{1, 1, 0, 1, 0});
  CHECK(r.tp == 2);
  CHECK(r.fp == 1);
  CHECK(r.fn == 1);
  CHECK(r.tn == 1);
  CHECK(r.precision == doctest::Approx(200.0 / 3.0));
  CHECK(r.recall == doctest::Approx(200.0 / 3.0));
  CHECK(r.f1 == doctest::Approx(200.0 / 3.0));

  auto perfect = evaluate_predictions(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0});
  CHECK(perfect.f1 == 100.0);

  auto none = evaluate_predictions(std::vector<double>{0.4, 0.1}, std::vector<int>{1, 0});
  CHECK(none.precision == 0.0);
  CHECK(none.f1 == 0.0);

  // Threshold is inclusive.
  CHECK(evaluate_predictions(std::vector<double>{0.5}, std::vector<int>{1}).tp == 1);
  CHECK_THROWS_AS(evaluate_predictions(std::vector<double>{}, std::vector<int>{}), ConfigError);
  CHECK_THROWS_AS(evaluate_predictions(std::vector<double>{0.5}, std::vector<int>{2}), ConfigError);
}

TEST_CASE("evaluate matches brute-force confusion counting") {
  Rng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<double> p(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.bernoulli(0.1) ? 0.5 : rng.uniform01();
      y[i] = rng.bernoulli(0.3) ? 1 : 0;
    }
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const int predicted = p[i] >= 0.5 ? 1 : 0;
      tp += predicted == 1 && y[i] == 1;
      fp += predicted == 1 && y[i] == 0;
      fn += predicted == 0 && y[i] == 1;
      tn += predicted == 0 && y[i] == 0;
    }
    const auto r = evaluate_predictions(p, y);
    CHECK(r.tp == tp);
    CHECK(r.fp == fp);
    CHECK(r.fn == fn);
    CHECK(r.tn == tn);
    CHECK(r.total() == n);
    const double prec = tp + fp ? 100.0 * tp / (tp + fp) : 0.0;
    const double rec = tp + fn ? 100.0 * tp / (tp + fn) : 0.0;
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    CHECK(r.precision == doctest::Approx(prec).epsilon(1e-12));
    CHECK(r.recall == doctest::Approx(rec).epsilon(1e-12));
    CHECK(r.f1 == doctest::Approx(f1).epsilon(1e-12));
  }
}

TEST_CASE("metrics csv") {
  MetricsLog log;
  log.add({1, "dev", report_from_counts(1, 1, 0, 2), 0.25});
  CHECK(log.csv() == "epoch,split,precision,recall,f1,loss\n"
                     "1,dev,50.0000,100.0000,66.6667,0.25000000\n");
  deeper::testing::TempDir dir;
  {
    MetricsLog file(dir.path() / "m.csv");
    file.add({1, "train", report_from_counts(0, 0, 0, 1), 1.0});
  }
  {
    MetricsLog file(dir.path() / "m.csv");
    file.add({2, "train", report_from_counts(0, 0, 0, 1), 1.0});
  }
  auto content = data::read_file(dir.path() / "m.csv");
  CHECK(std::count(content.begin(), content.end(), '\n') == 3);
}

TEST_CASE("supervised training") {
  auto model = toy_model();
  const auto train_set = separable_examples(model, 48, 1);
  const auto dev_set = separable_examples(model, 16, 2);
  TrainConfig cfg;
  cfg.adam.lr = 0.01;

  SUBCASE("separable toy data reaches dev F1 100 within 20 epochs") {
    MetricsLog log;
    auto result = train_supervised(model, train_set, dev_set, cfg, &log);
    CHECK(result.best.dev.f1 == 100.0);
    CHECK(log.rows().size() == 2 * cfg.epochs);
    // The returned checkpoint is the earliest epoch with the best dev F1.
    double best = -1;
    std::size_t best_epoch = 0;
    for (const auto& row : result.history) {
      CHECK(std::isfinite(row.loss));
      if (row.split == "dev" && row.report.f1 > best) {
        best = row.report.f1;
        best_epoch = row.epoch;
      }
    }
    CHECK(result.best.epoch == best_epoch);
    // The model holds the best parameters.
    CHECK(evaluate(model, dev_set).f1 == result.best.dev.f1);
    CHECK(model.parameters().all_finite());
  }
  SUBCASE("one epoch returns epoch 1") {
    cfg.epochs = 1;
    CHECK(train_supervised(model, train_set, dev_set, cfg).best.epoch == 1);
  }
  SUBCASE("same seed gives bitwise identical parameters and curves for any thread count") {
    cfg.epochs = 3;
    auto m1 = toy_model();
    auto m2 = toy_model();
    MetricsLog l1, l2;
    cfg.threads = 1;
    train_supervised(m1, train_set, dev_set, cfg, &l1);
    cfg.threads = 4;
    train_supervised(m2, train_set, dev_set, cfg, &l2);
    CHECK(same_parameters(m1.parameters(), m2.parameters()));
    CHECK(l1.csv() == l2.csv());
  }
  SUBCASE("errors and warnings") {
    CHECK_THROWS_AS(train_supervised(model, {}, dev_set, cfg), ConfigError);
    CHECK_THROWS_AS(train_supervised(model, train_set, {}, cfg), ConfigError);
    auto unlabeled = train_set;
    unlabeled[3].label = -1;
    CHECK_THROWS_AS(train_supervised(model, unlabeled, dev_set, cfg), ConfigError);
    std::vector<Example> positives;
    for (const auto& e : train_set) {
      if (e.label == 1) positives.push_back(e);
    }
    std::vector<std::string> warnings;
    auto previous = set_warning_sink([&](std::string_view m) { warnings.emplace_back(m); });
    cfg.epochs = 1;
    train_supervised(model, positives, dev_set, cfg);
    set_warning_sink(previous);
    CHECK(warnings.size() == 1);
  }
}

TEST_CASE("batch losses") {
  auto model = toy_model(2);
  CHECK(model.dataset_head()->outputs == 2);
  const auto source = separable_examples(model, 8, 3, 0);
  const auto target = separable_examples(model, 8, 4, 1);
  const auto matching = head_ids(model.matching_head());
  const auto dataset = head_ids(*model.dataset_head());

  SUBCASE("a target-only step leaves the matching head untouched") {
    auto r = batch_gradients(model, pointers(target), LossTerms::kDatasetOnly);
    for (auto id : matching) CHECK(all_zero(r.gradients[id]));
    bool encoder_moved = false;
    for (auto id : model.encoder_parameters()) encoder_moved |= !all_zero(r.gradients[id]);
    CHECK(encoder_moved);
    CHECK(r.matching_loss == 0.0);
    CHECK(r.dataset_loss > 0.0);
  }
  SUBCASE("a matching-only step leaves the dataset head untouched") {
    auto r = batch_gradients(model, pointers(source), LossTerms::kMatching);
    for (auto id : dataset) CHECK(all_zero(r.gradients[id]));
  }
  SUBCASE("lambda = 0 cuts the dataset loss off from the encoder") {
    auto config = model::ModelConfig::toy();
    config.num_datasets = 2;
    config.reversal_lambda = 0.0;
    model::ErModel m0(config, deeper::testing::hashed_store(config.embedding_dim));
    const auto t0 = separable_examples(m0, 8, 4, 1);
    auto r = batch_gradients(m0, pointers(t0), LossTerms::kDatasetOnly);
    for (auto id : m0.encoder_parameters()) CHECK(all_zero(r.gradients[id]));
    bool head_moved = false;
    for (auto id : head_ids(*m0.dataset_head())) head_moved |= !all_zero(r.gradients[id]);
    CHECK(head_moved);
  }
  SUBCASE("batch gradient is the mean of per-example gradients") {
    auto whole = batch_gradients(model, pointers(source), LossTerms::kMatchingAndDataset, 3);
    ad::Gradients sum(model.parameters());
    for (const auto& e : source) {
      const Example* one[] = {&e};
      sum.accumulate(batch_gradients(model, one, LossTerms::kMatchingAndDataset, 1).gradients);
    }
    sum.scale(1.0 / source.size());
    for (std::size_t i = 0; i < model.parameters().size(); ++i) {
      const auto a = whole.gradients[ad::ParamId{i}].values();
      const auto b = sum[ad::ParamId{i}].values();
      for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-12));
    }
  }
  SUBCASE("dataset id outside the classifier") {
    auto bad = target;
    bad[0].dataset = 5;
    CHECK_THROWS_AS(batch_gradients(model, pointers(bad), LossTerms::kDatasetOnly), ConfigError);
  }
}

TEST_CASE("adversarial training") {
  auto model = toy_model(2);
  const auto source_train = separable_examples(model, 32, 5, 0);
  const auto source_dev = separable_examples(model, 12, 6, 0);
  auto target = separable_examples(model, 20, 7, 1);
  for (auto& t : target) t.label = -1;
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.adam.lr = 0.01;

  SUBCASE("runs, stays finite and is deterministic") {
    MetricsLog l1, l2;
    auto r1 = train_adversarial(model, source_train, source_dev, target, cfg, &l1);
    auto other = toy_model(2);
    train_adversarial(other, source_train, source_dev, target, cfg, &l2);
    CHECK(model.parameters().all_finite());
    CHECK(same_parameters(model.parameters(), other.parameters()));
    CHECK(l1.csv() == l2.csv());
    CHECK(r1.best.epoch >= 1);
  }
  SUBCASE("dataset classifier is trained") {
    const auto before = snapshot(model.parameters());
    train_adversarial(model, source_train, source_dev, target, cfg);
    const auto id = model.dataset_head()->out_w;
    CHECK_FALSE(model.parameters()[id].value == before[id.index]);
  }
  SUBCASE("empty target falls back to supervised training with a warning") {
    std::vector<std::string> warnings;
    auto previous = set_warning_sink([&](std::string_view m) { warnings.emplace_back(m); });
    auto r1 = train_adversarial(model, source_train, source_dev, {}, cfg);
    set_warning_sink(previous);
    CHECK(warnings.size() == 1);
    auto other = toy_model(2);
    auto r2 = train_supervised(other, source_train, source_dev, cfg);
    CHECK(same_parameters(model.parameters(), other.parameters()));
    CHECK(r1.best.epoch == r2.best.epoch);
  }
  SUBCASE("configuration errors") {
    auto plain = toy_model(0);
    CHECK_THROWS_AS(train_adversarial(plain, source_train, source_dev, target, cfg), ConfigError);
    auto clash = target;
    for (auto& t : clash) t.dataset = 0;
    CHECK_THROWS_AS(train_adversarial(model, source_train, source_dev, clash, cfg), ConfigError);
  }
}

TEST_CASE("prepare_examples shares records between pairs") {
  auto model = toy_model();
  data::EntityTable A("A", Schema({"t"}));
  A.add({"a1", {"alpha bravo"}});
  data::EntityTable B("B", Schema({"t"}));
  B.add({"b1", {"alpha"}});
  B.add({"b2", {"charlie"}});
  data::CandidateSet cs;
  cs.pairs = {{"a1", "b1", 1}, {"a1", "b2", std::nullopt}};
  CHECK_THROWS_AS(prepare_examples(model, cs, A, B), ConfigError);  // partial labels
  cs.pairs[1].label = 0;
  auto ex = prepare_examples(model, cs, A, B, 3);
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].pair.left == ex[1].pair.left);
  CHECK(ex[0].pair.left->at(0).size() == 2);
  CHECK(ex[1].label == 0);
  CHECK(ex[1].dataset == 3);
  CHECK(ex[1].right_id == "b2");
}
