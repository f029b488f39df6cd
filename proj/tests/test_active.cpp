#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "deeper/active/learner.hpp"
#include "deeper/active/sampling.hpp"
#include "deeper/error.hpp"
#include "deeper/log.hpp"
#include "deeper/random.hpp"
#include "train_fixture.hpp"

using namespace deeper;
using namespace deeper::active;
using deeper::testing::separable_examples;
using deeper::testing::toy_model;

namespace {

std::vector<PoolEntry> pool_of(std::initializer_list<std::pair<const char*, double>> items) {
  std::vector<PoolEntry> out;
  for (auto [id, p] : items) out.push_back({id, p});
  return out;
}

// Full sort of one partition by (entropy desc | asc, id asc).
std::vector<std::string> oracle(const std::vector<PoolEntry>& pool, std::size_t count,
                                bool highest, int side /* 1 match, 0 non-match, -1 all */) {
  std::vector<std::pair<double, std::string>> rows;
  for (const auto& e : pool) {
    const int s = e.probability >= 0.5 ? 1 : 0;
    if (side == -1 || s == side) rows.push_back({entropy(e.probability), e.id});
  }
  std::sort(rows.begin(), rows.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return highest ? a.first > b.first : a.first < b.first;
    return a.second < b.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(count, rows.size()); ++i) out.push_back(rows[i].second);
  return out;
}

std::vector<PoolEntry> remove_ids(const std::vector<PoolEntry>& pool,
                                  const std::vector<std::string>& ids) {
  std::vector<PoolEntry> out;
  for (const auto& e : pool) {
    if (std::find(ids.begin(), ids.end(), e.id) == ids.end()) out.push_back(e);
  }
  return out;
}

std::vector<train::Example> unique_pool(const model::ErModel& m, std::size_t n,
                                        std::uint64_t seed) {
  auto ex = separable_examples(m, n, seed);
  for (std::size_t i = 0; i < ex.size(); ++i) {
    ex[i].left_id = "l" + std::to_string(1000 + i);
    ex[i].right_id = "r" + std::to_string(1000 + i);
  }
  return ex;
}

ALConfig quick_config() {
  ALConfig c;
  c.max_epochs = 2;
  c.train.adam.lr = 0.01;
  return c;
}

class FailingAnnotator : public Annotator {
 public:
  std::map<std::string, int> label(const std::vector<std::string>&) override {
    throw std::runtime_error("annotator unavailable");
  }
};

}  // namespace

TEST_CASE("entropy") {
  CHECK(entropy(0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(std::fabs(entropy(0.5) - 0.693147180559945) < 1e-9);
  CHECK(entropy(0.0) == 0.0);
  CHECK(entropy(1.0) == 0.0);
  CHECK(std::fabs(entropy(0.9) - 0.325082973391448) < 1e-9);
  CHECK_THROWS_AS(entropy(-0.1), ConfigError);
  CHECK_THROWS_AS(entropy(1.1), ConfigError);
  CHECK_THROWS_AS(entropy(std::nan("")), ConfigError);
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double p = rng.uniform01();
    CHECK(std::fabs(entropy(p) - entropy(1.0 - p)) < 1e-9);
    CHECK(entropy(p) <= entropy(0.5));
    const double q = rng.uniform01();
    if (std::fabs(p - 0.5) < std::fabs(q - 0.5) - 1e-12) CHECK(entropy(p) > entropy(q));
  }
}

TEST_CASE("partition") {
  auto r = partition(pool_of({{"a", 0.9}, {"b", 0.5}, {"c", 0.49}}));
  CHECK(r.match == std::vector<std::string>{"a", "b"});
  CHECK(r.non_match == std::vector<std::string>{"c"});
  CHECK(partition({}).match.empty());
  CHECK(partition(pool_of({{"a", 0.1}, {"b", 0.2}})).match.empty());
}

TEST_CASE("selection examples") {
  const auto pool = pool_of({{"m1", 0.99}, {"m2", 0.95}, {"m3", 0.8}, {"m4", 0.55},
                             {"n1", 0.45}, {"n2", 0.2}, {"n3", 0.05}, {"n4", 0.01}});
  auto u = select_uncertain(pool, 2);
  CHECK(u.likely_fp == std::vector<std::string>{"m4", "m3"});
  CHECK(u.likely_fn == std::vector<std::string>{"n1", "n2"});
  CHECK(u.shortfall == 0);
  auto rest = remove_ids(pool, {"m4", "m3", "n1", "n2"});
  auto hc = select_high_confidence(rest, 2);
  CHECK(hc.positives == std::vector<std::string>{"m1", "m2"});
  CHECK(hc.negatives == std::vector<std::string>{"n4", "n3"});

  auto full = select(pool, Strategy::kHighConfidencePartition, 4);
  CHECK(full.likely_fp == u.likely_fp);
  CHECK(full.likely_fn == u.likely_fn);
  CHECK(full.hc_pos == hc.positives);
  CHECK(full.hc_neg == hc.negatives);

  SUBCASE("ties go to the smallest ids") {
    auto same = pool_of({{"d", 0.7}, {"b", 0.7}, {"c", 0.7}, {"a", 0.7}});
    CHECK(select_uncertain(same, 2).likely_fp == std::vector<std::string>{"a", "b"});
    CHECK(select_high_confidence(same, 2).positives == std::vector<std::string>{"a", "b"});
  }
  SUBCASE("k larger than a partition takes all of it and records the shortfall") {
    auto s = select_uncertain(pool_of({{"a", 0.9}, {"b", 0.1}, {"c", 0.2}}), 3);
    CHECK(s.likely_fp == std::vector<std::string>{"a"});
    CHECK(s.likely_fn.size() == 2);
    CHECK(s.shortfall == 3);
  }
  SUBCASE("global top-K") {
    auto p = pool_of({{"x", 0.5}, {"y", 0.9}, {"z", 0.1}});
    CHECK(select_topk_entropy(p, 1) == std::vector<std::string>{"x"});
    CHECK(select_topk_entropy(p, 3).size() == 3);
    CHECK(select_topk_entropy(p, 10).size() == 3);
  }
  SUBCASE("strategies") {
    auto topk = select(pool, Strategy::kTopK, 4);
    CHECK(topk.human().size() == 4);
    CHECK(topk.proxy_count() == 0);
    auto part = select(pool, Strategy::kPartition, 4);
    CHECK(part.likely_fp.size() == 2);
    CHECK(part.proxy_count() == 0);
    auto hc = select(pool, Strategy::kHighConfidence, 4);
    CHECK(hc.human().size() == 4);
    CHECK(hc.proxy_count() == 4);
    for (const auto& id : hc.hc_pos) CHECK(hc.probability.at(id) >= 0.5);
    for (const auto& id : hc.hc_neg) CHECK(hc.probability.at(id) < 0.5);
    CHECK_THROWS_AS(select(pool, Strategy::kTopK, 3), ConfigError);
    CHECK(parse_strategy("high_conf_partition") == Strategy::kHighConfidencePartition);
    CHECK_THROWS_AS(parse_strategy("random"), ConfigError);
  }
}

TEST_CASE("samplers agree with a brute-force oracle on random pools") {
  Rng rng(77);
  const EntropyFn doubled = [](double p) { return 2.0 * entropy(p); };
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(500);
    std::vector<PoolEntry> pool;
    for (std::size_t i = 0; i < n; ++i) {
      double p;
      switch (rng.below(5)) {
        case 0:
          p = 0.5;
          break;
        case 1:
          p = static_cast<double>(rng.below(11)) / 10.0;  // ties, 0 and 1
          break;
        default:
          p = rng.uniform01();
      }
      pool.push_back({"p" + std::to_string(rng.below(1'000'000)) + "_" + std::to_string(i), p});
    }
    rng.shuffle(std::span<PoolEntry>(pool));
    const std::size_t k = 1 + rng.below(15);

    const auto u = select_uncertain(pool, k);
    CHECK(u.likely_fp == oracle(pool, k, true, 1));
    CHECK(u.likely_fn == oracle(pool, k, true, 0));
    auto human = u.likely_fp;
    human.insert(human.end(), u.likely_fn.begin(), u.likely_fn.end());
    const auto rest = remove_ids(pool, human);
    const auto hc = select_high_confidence(rest, k);
    CHECK(hc.positives == oracle(rest, k, false, 1));
    CHECK(hc.negatives == oracle(rest, k, false, 0));
    CHECK(select_topk_entropy(pool, 2 * k) == oracle(pool, 2 * k, true, -1));

    // Pairwise disjoint and inside the right partitions.
    std::set<std::string> all;
    std::size_t total = 0;
    for (const auto* list : {&u.likely_fp, &u.likely_fn, &hc.positives, &hc.negatives}) {
      all.insert(list->begin(), list->end());
      total += list->size();
    }
    CHECK(all.size() == total);

    // Rank-only dependence.
    const auto u2 = select_uncertain(pool, k, doubled);
    CHECK(u2.likely_fp == u.likely_fp);
    CHECK(u2.likely_fn == u.likely_fn);
    const auto hc2 = select_high_confidence(rest, k, doubled);
    CHECK(hc2.positives == hc.positives);
    CHECK(hc2.negatives == hc.negatives);
    CHECK(select_topk_entropy(pool, 2 * k, doubled) == select_topk_entropy(pool, 2 * k));
    const auto s1 = select(pool, Strategy::kHighConfidencePartition, 2 * k);
    const auto s2 = select(pool, Strategy::kHighConfidencePartition, 2 * k, doubled);
    CHECK(s1.human() == s2.human());
    CHECK(s1.hc_pos == s2.hc_pos);
    CHECK(s1.hc_neg == s2.hc_neg);
  }
}

TEST_CASE("active learning accounting") {
  // Transfer-style initialisation so that both partitions are populated.
  auto model = toy_model();
  {
    const auto source = separable_examples(model, 64, 30);
    train::TrainConfig warm;
    warm.epochs = 20;
    warm.adam.lr = 0.01;
    train::train_supervised(model, source, source, warm);
  }
  auto pool = unique_pool(model, 500, 31);
  const auto gold = gold_labels(pool);
  ALConfig cfg = quick_config();
  cfg.K = 20;
  cfg.iterations = 10;
  ActiveLearner learner(model, pool, cfg);
  OracleAnnotator oracle(gold);
  std::size_t previous_total = learner.pool_size() + learner.labeled().size();
  for (std::size_t t = 0; t < 10; ++t) {
    const auto& log = learner.iterate(oracle);
    CHECK(log.human_labels == 20);
    CHECK(log.proxy_labels <= 20);
    CHECK(log.fp + log.tp + log.fn + log.tn == 20);
    CHECK(learner.pool_size() + learner.labeled().size() == previous_total);
    previous_total = learner.pool_size() + learner.labeled().size();
    CHECK(log.proxy_errors_known);
    CHECK(log.f1_trajectory.size() == 2);
  }
  CHECK(learner.finished());
  CHECK(learner.human_labels_used() == 200);
  CHECK(oracle.requests() == 200);
  std::size_t humans = 0, proxies = 0;
  for (const auto& [id, entry] : learner.labeled()) {
    (entry.provenance == Provenance::kHuman ? humans : proxies)++;
    if (entry.provenance == Provenance::kHuman) CHECK(entry.label == gold.at(id));
  }
  CHECK(humans == 200);
  CHECK(proxies <= 200);
  CHECK_THROWS_AS(learner.select(), ConfigError);

  const auto csv = iteration_csv(learner.logs());
  CHECK(csv.rfind("iter,human_labels,proxy_labels,fp,tp,fn,tn,f1_on_labeled,test_f1\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
}

TEST_CASE("active learning state handling") {
  auto model = toy_model();
  auto pool = unique_pool(model, 60, 32);
  const auto gold = gold_labels(pool);
  ALConfig cfg = quick_config();
  cfg.K = 10;
  cfg.iterations = 3;

  SUBCASE("annotator failure leaves everything untouched") {
    ActiveLearner learner(model, pool, cfg);
    const auto params = train::snapshot(model.parameters());
    FailingAnnotator broken;
    CHECK_THROWS(learner.iterate(broken));
    CHECK(learner.iteration() == 0);
    CHECK(learner.pool_size() == 60);
    CHECK(learner.labeled().empty());
    const auto after = train::snapshot(model.parameters());
    for (std::size_t i = 0; i < params.size(); ++i) CHECK(params[i] == after[i]);
    // The same selection is still pending and can be completed.
    OracleAnnotator oracle(gold);
    CHECK(learner.iterate(oracle).human_labels == 10);
  }
  SUBCASE("bad label submissions are rejected") {
    ActiveLearner learner(model, pool, cfg);
    CHECK_THROWS_AS(learner.complete({}), ConfigError);  // nothing pending
    const auto ids = learner.select().human();
    std::map<std::string, int> labels;
    for (const auto& id : ids) labels[id] = gold.at(id);
    auto missing = labels;
    missing.erase(ids[0]);
    CHECK_THROWS_AS(learner.complete(missing), ConfigError);
    auto extra = labels;
    extra["nope|nope"] = 1;
    CHECK_THROWS_AS(learner.complete(extra), ConfigError);
    auto invalid = labels;
    invalid[ids[0]] = 3;
    CHECK_THROWS_AS(learner.complete(invalid), ConfigError);
    CHECK(learner.iteration() == 0);
    CHECK(learner.complete(labels).human_labels == 10);
  }
  SUBCASE("an empty partition is logged as a shortfall, not compensated") {
    ActiveLearner learner(model, pool, cfg);
    const auto probs = learner.pool_probabilities();
    const bool one_sided =
        std::all_of(probs.begin(), probs.end(), [](auto& e) { return e.probability >= 0.5; }) ||
        std::all_of(probs.begin(), probs.end(), [](auto& e) { return e.probability < 0.5; });
    OracleAnnotator oracle(gold);
    const auto& log = learner.iterate(oracle);
    CHECK(log.human_labels + log.shortfall >= cfg.K);
    if (one_sided) {
      CHECK(log.human_labels == cfg.k());
      CHECK(log.shortfall == 2 * cfg.k());  // k humans and k proxies missing
    }
  }
  SUBCASE("pool exhaustion ends the loop") {
    ActiveLearner learner(model, unique_pool(model, 25, 33), cfg);
    OracleAnnotator oracle(gold_labels(unique_pool(model, 25, 33)));
    learner.run(oracle);
    CHECK(learner.pool_size() == 0);
    CHECK(learner.human_labels_used() <= 25);
    std::size_t human = 0;
    for (const auto& l : learner.logs()) human += l.human_labels;
    CHECK(human == learner.human_labels_used());
    CHECK(learner.logs().size() < 3);
  }
  SUBCASE("retained proxies stay in the pool and may be relabeled by humans") {
    cfg.retain_high_confidence = true;
    ActiveLearner learner(model, pool, cfg);
    OracleAnnotator oracle(gold);
    const auto& log = learner.iterate(oracle);
    CHECK(learner.pool_size() == 60 - log.human_labels);
    learner.run(oracle);
    for (const auto& [id, entry] : learner.labeled()) {
      if (entry.provenance != Provenance::kHuman) continue;
      CHECK(entry.label == gold.at(id));
    }
  }
  SUBCASE("deterministic") {
    auto m1 = toy_model();
    auto m2 = toy_model();
    ActiveLearner a(m1, pool, cfg);
    ActiveLearner b(m2, pool, cfg);
    OracleAnnotator o1(gold), o2(gold);
    a.run(o1);
    b.run(o2);
    CHECK(iteration_csv(a.logs()) == iteration_csv(b.logs()));
    const auto p1 = train::snapshot(m1.parameters());
    const auto p2 = train::snapshot(m2.parameters());
    for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i] == p2[i]);
  }
  SUBCASE("test evaluation per iteration") {
    ActiveLearner learner(model, pool, cfg, unique_pool(model, 20, 34));
    OracleAnnotator oracle(gold);
    CHECK(learner.iterate(oracle).test_f1.has_value());
  }
}

TEST_CASE("active learning config") {
  ALConfig c;
  CHECK(c.K == 20);
  CHECK(c.k() == 10);
  CHECK(c.max_epochs == 20);
  CHECK(c.train.batch_size == 16);
  c.iterations = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.iterations = 1;
  c.K = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.K = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  auto parsed = ALConfig::from_json({{"K", 10}, {"strategy", "topk"}, {"train", {{"lr", 0.01}}}});
  CHECK(parsed.K == 10);
  CHECK(parsed.strategy == Strategy::kTopK);
  CHECK(parsed.train.adam.lr == 0.01);
  CHECK(ALConfig::from_json(parsed.to_json()).to_json() == parsed.to_json());
  CHECK_THROWS_AS(ALConfig::from_json({{"k", 10}}), ConfigError);
  auto model = toy_model();
  CHECK_THROWS_AS(ActiveLearner(model, {}, ALConfig{}), ConfigError);
}

TEST_CASE("random-sampling baseline") {
  auto model = toy_model();
  auto pool = unique_pool(model, 80, 35);
  ALConfig cfg = quick_config();
  auto r = train_random_sample(model, pool, 30, cfg, 9);
  CHECK(r.best.epoch >= 1);
  CHECK(r.history.size() == 4);
  CHECK_THROWS_AS(train_random_sample(model, pool, 0, cfg, 9), ConfigError);
}
