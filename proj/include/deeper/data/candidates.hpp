#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "deeper/data/table.hpp"
#include "json.hpp"

namespace deeper::data {

struct CandidatePair {
  std::string left;
  std::string right;
  std::optional<int> label;  // 1 match, 0 non-match

  friend bool operator==(const CandidatePair&, const CandidatePair&) = default;
};

struct CandidateSet {
  std::vector<CandidatePair> pairs;
  nlohmann::json provenance = nlohmann::json::object();

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  // True when every pair carries a label. Throws ConfigError when only some do.
  bool labeled() const;
};

using MatchSet = std::set<std::pair<std::string, std::string>>;

// Collapsed q-gram set of the lowercased string. A non-empty string shorter
// than q yields itself as its only gram.
std::set<std::string> qgrams(std::string_view s, std::size_t q);
// Both gram sets empty gives 1; one empty gives 0.
double qgram_jaccard(std::string_view a, std::string_view b, std::size_t q = 3);

struct EqualityRule {
  std::string attribute;
  friend bool operator==(const EqualityRule&, const EqualityRule&) = default;
};
struct QgramJaccardRule {
  std::string attribute;
  std::size_t q = 3;
  double threshold = 0.5;
  friend bool operator==(const QgramJaccardRule&, const QgramJaccardRule&) = default;
};
struct TokenOverlapRule {
  std::string attribute;
  std::size_t min_shared = 1;
  friend bool operator==(const TokenOverlapRule&, const TokenOverlapRule&) = default;
};
using BlockingRule = std::variant<EqualityRule, QgramJaccardRule, TokenOverlapRule>;

// Throws ConfigError on threshold outside (0,1], q < 1 or n < 1.
void validate_rule(const BlockingRule& rule);
const std::string& rule_attribute(const BlockingRule& rule);
nlohmann::json rule_to_json(const BlockingRule& rule);
// {"kind": "equality"|"qgram_jaccard"|"token_overlap", "attribute": ..., "q", "threshold", "min_shared"}
BlockingRule rule_from_json(const nlohmann::json& j);

inline constexpr std::size_t kMaxCandidatePairs = 5'000'000;

struct BlockOptions {
  std::size_t max_pairs = kMaxCandidatePairs;
  bool allow_large = false;
  std::size_t threads = 0;  // 0 = hardware concurrency
};

// Keeps the pairs passing every rule, sorted by (left id, right id). When
// `gold` is given every pair gets a label: 1 iff it appears in gold.
CandidateSet block(const EntityTable& left, const EntityTable& right,
                   const std::vector<BlockingRule>& rules, const BlockOptions& options = {},
                   const MatchSet* gold = nullptr);

// Brute-force predicate used by block; exposed for oracle tests.
bool passes_rules(const EntityTable& left, const Record& a, const Record& b,
                  const std::vector<BlockingRule>& rules);

struct Split {
  CandidateSet train, dev, test;
  nlohmann::json manifest;  // seed, total, cut indices, sizes
};

// Seeded shuffle, then dev = test = floor(N/5) and train takes the rest.
Split split(const CandidateSet& candidates, std::uint64_t seed);

struct CandidateStats {
  std::size_t pairs = 0;
  std::optional<std::size_t> matches;  // empty when unlabeled
  std::size_t attributes = 0;
  nlohmann::json to_json() const;
};
CandidateStats stats(const CandidateSet& candidates, std::size_t attributes);

MatchSet read_matches(const std::filesystem::path& path);
void write_matches(const MatchSet& matches, const std::filesystem::path& path);
// Header left_id,right_id,label; label column optional, empty cell = unlabeled.
CandidateSet read_candidates(const std::filesystem::path& path);
void write_candidates(const CandidateSet& candidates, const std::filesystem::path& path);
// Throws ConfigError when a pair refers to an id missing from either table
// or appears twice.
void validate_candidates(const CandidateSet& candidates, const EntityTable& left,
                         const EntityTable& right);

}  // namespace deeper::data
