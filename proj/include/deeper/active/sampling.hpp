#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace deeper::active {

// Binary entropy in nats with 0 ln 0 = 0. Throws ConfigError outside [0,1].
double entropy(double p);

using EntropyFn = std::function<double(double)>;

struct PoolEntry {
  std::string id;
  double probability = 0.0;  // match probability under the current model
};

// Predicted matches are p >= 0.5. Ids keep pool order.
struct PartitionResult {
  std::vector<std::string> match;
  std::vector<std::string> non_match;
};
PartitionResult partition(std::span<const PoolEntry> pool);

// Rankings break score ties by ascending id. Selections never depend on
// entropy values beyond their order.
std::vector<std::string> select_topk_entropy(std::span<const PoolEntry> pool, std::size_t count,
                                             const EntropyFn& h = entropy);
std::vector<std::string> select_bottomk_entropy(std::span<const PoolEntry> pool, std::size_t count,
                                                const EntropyFn& h = entropy);

struct UncertainSelection {
  std::vector<std::string> likely_fp;  // highest entropy among predicted matches
  std::vector<std::string> likely_fn;  // highest entropy among predicted non-matches
  std::size_t shortfall = 0;           // requested minus returned
};
UncertainSelection select_uncertain(std::span<const PoolEntry> pool, std::size_t k,
                                     const EntropyFn& h = entropy);

struct HighConfidenceSelection {
  std::vector<std::string> positives;  // lowest entropy among predicted matches
  std::vector<std::string> negatives;  // lowest entropy among predicted non-matches
  std::size_t shortfall = 0;
};
HighConfidenceSelection select_high_confidence(std::span<const PoolEntry> pool, std::size_t k,
                                               const EntropyFn& h = entropy);

enum class Strategy {
  kTopK,                     // global top-K entropy, no proxies
  kHighConfidence,           // global top-K for humans, global bottom-K as proxies
  kPartition,                // k per partition for humans, no proxies
  kHighConfidencePartition,  // k per partition for humans and k per partition as proxies
};
std::string to_string(Strategy s);
// Accepts topk, high_conf, partition, high_conf_partition.
Strategy parse_strategy(const std::string& name);

struct SelectionResult {
  Strategy strategy = Strategy::kHighConfidencePartition;
  std::vector<std::string> likely_fp;  // human picks predicted as match
  std::vector<std::string> likely_fn;  // human picks predicted as non-match
  std::vector<std::string> hc_pos;     // proxy label 1
  std::vector<std::string> hc_neg;     // proxy label 0
  std::size_t shortfall = 0;
  std::map<std::string, double> probability;  // every selected id

  // likely_fp then likely_fn.
  std::vector<std::string> human() const;
  std::size_t proxy_count() const { return hc_pos.size() + hc_neg.size(); }
  nlohmann::json to_json() const;
};

// K human picks (k = K/2 per partition for the partition strategies) and,
// for the high-confidence strategies, proxies chosen from the pool with the
// human picks removed.
SelectionResult select(std::span<const PoolEntry> pool, Strategy strategy, std::size_t K,
                       const EntropyFn& h = entropy);

}  // namespace deeper::active
