#include "deeper/active/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "deeper/error.hpp"

namespace deeper::active {

double entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigError("entropy needs a probability in [0, 1], got " + std::to_string(p));
  }
  auto term = [](double x) { return x > 0.0 ? -x * std::log(x) : 0.0; };
  return term(p) + term(1.0 - p);
}

PartitionResult partition(std::span<const PoolEntry> pool) {
  PartitionResult out;
  for (const auto& e : pool) (e.probability >= 0.5 ? out.match : out.non_match).push_back(e.id);
  return out;
}

namespace {

std::vector<std::string> ranked(std::span<const PoolEntry> pool, std::size_t count,
                                const EntropyFn& h, bool highest) {
  struct Scored {
    double score;
    const std::string* id;
  };
  std::vector<Scored> scored;
  scored.reserve(pool.size());
  for (const auto& e : pool) scored.push_back({h(e.probability), &e.id});
  auto before = [highest](const Scored& a, const Scored& b) {
    if (a.score != b.score) return highest ? a.score > b.score : a.score < b.score;
    return *a.id < *b.id;
  };
  count = std::min(count, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(count),
                    scored.end(), before);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(*scored[i].id);
  return out;
}

std::pair<std::vector<PoolEntry>, std::vector<PoolEntry>> split_entries(
    std::span<const PoolEntry> pool) {
  std::pair<std::vector<PoolEntry>, std::vector<PoolEntry>> out;
  for (const auto& e : pool) (e.probability >= 0.5 ? out.first : out.second).push_back(e);
  return out;
}

}  // namespace

std::vector<std::string> select_topk_entropy(std::span<const PoolEntry> pool, std::size_t count,
                                             const EntropyFn& h) {
  return ranked(pool, count, h, true);
}

std::vector<std::string> select_bottomk_entropy(std::span<const PoolEntry> pool, std::size_t count,
                                                const EntropyFn& h) {
  return ranked(pool, count, h, false);
}

UncertainSelection select_uncertain(std::span<const PoolEntry> pool, std::size_t k,
                                    const EntropyFn& h) {
  const auto [match, non_match] = split_entries(pool);
  UncertainSelection s;
  s.likely_fp = ranked(match, k, h, true);
  s.likely_fn = ranked(non_match, k, h, true);
  s.shortfall = 2 * k - s.likely_fp.size() - s.likely_fn.size();
  return s;
}

HighConfidenceSelection select_high_confidence(std::span<const PoolEntry> pool, std::size_t k,
                                               const EntropyFn& h) {
  const auto [match, non_match] = split_entries(pool);
  HighConfidenceSelection s;
  s.positives = ranked(match, k, h, false);
  s.negatives = ranked(non_match, k, h, false);
  s.shortfall = 2 * k - s.positives.size() - s.negatives.size();
  return s;
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kTopK:
      return "topk";
    case Strategy::kHighConfidence:
      return "high_conf";
    case Strategy::kPartition:
      return "partition";
    case Strategy::kHighConfidencePartition:
      return "high_conf_partition";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  for (Strategy s : {Strategy::kTopK, Strategy::kHighConfidence, Strategy::kPartition,
                     Strategy::kHighConfidencePartition}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown sampling strategy '" + name +
                    "' (expected topk, high_conf, partition or high_conf_partition)");
}

std::vector<std::string> SelectionResult::human() const {
  std::vector<std::string> ids = likely_fp;
  ids.insert(ids.end(), likely_fn.begin(), likely_fn.end());
  return ids;
}

nlohmann::json SelectionResult::to_json() const {
  nlohmann::json probs = nlohmann::json::object();
  for (const auto& [id, p] : probability) {
    probs[id] = {{"probability", p}, {"entropy", entropy(p)}};
  }
  return {{"strategy", to_string(strategy)}, {"likely_fp", likely_fp}, {"likely_fn", likely_fn},
          {"hc_pos", hc_pos},               {"hc_neg", hc_neg},       {"shortfall", shortfall},
          {"scores", probs}};
}

SelectionResult select(std::span<const PoolEntry> pool, Strategy strategy, std::size_t K,
                       const EntropyFn& h) {
  if (K < 2 || K % 2 != 0) throw ConfigError("sampling size K must be even and >= 2");
  const std::size_t k = K / 2;
  SelectionResult out;
  out.strategy = strategy;
  std::map<std::string, double> prob_of;
  for (const auto& e : pool) prob_of.emplace(e.id, e.probability);

  const bool partitioned =
      strategy == Strategy::kPartition || strategy == Strategy::kHighConfidencePartition;
  if (partitioned) {
    auto u = select_uncertain(pool, k, h);
    out.likely_fp = std::move(u.likely_fp);
    out.likely_fn = std::move(u.likely_fn);
  } else {
    for (auto& id : select_topk_entropy(pool, K, h)) {
      (prob_of.at(id) >= 0.5 ? out.likely_fp : out.likely_fn).push_back(std::move(id));
    }
  }
  out.shortfall = K - out.likely_fp.size() - out.likely_fn.size();

  if (strategy == Strategy::kHighConfidence || strategy == Strategy::kHighConfidencePartition) {
    const auto human = out.human();
    const std::set<std::string> taken(human.begin(), human.end());
    std::vector<PoolEntry> rest;
    for (const auto& e : pool) {
      if (!taken.count(e.id)) rest.push_back(e);
    }
    if (partitioned) {
      auto hc = select_high_confidence(rest, k, h);
      out.hc_pos = std::move(hc.positives);
      out.hc_neg = std::move(hc.negatives);
      out.shortfall += hc.shortfall;
    } else {
      auto ids = select_bottomk_entropy(rest, K, h);
      out.shortfall += K - ids.size();
      for (auto& id : ids) (prob_of.at(id) >= 0.5 ? out.hc_pos : out.hc_neg).push_back(std::move(id));
    }
  }
  for (const auto* list : {&out.likely_fp, &out.likely_fn, &out.hc_pos, &out.hc_neg}) {
    for (const auto& id : *list) out.probability[id] = prob_of.at(id);
  }
  return out;
}

}  // namespace deeper::active
