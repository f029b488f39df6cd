#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deeper/data/candidates.hpp"
#include "deeper/data/table.hpp"

namespace deeper::data {

// Per-record noise applied to the right-hand copy of each entity.
struct PerturbationConfig {
  double typo_rate = 0.08;          // per token: one character edit
  double token_drop_rate = 0.05;    // per title token
  double abbreviation_rate = 0.5;   // per attribute: initials / venue acronym
  double null_rate = 0.05;          // per attribute: value emptied

  static PerturbationConfig none() { return {0.0, 0.0, 0.0, 0.0}; }
};

struct SynthConfig {
  std::size_t entities = 300;
  PerturbationConfig perturbation;
  // Share of entities whose title is a near copy of another entity's title
  // (hard non-matches that survive blocking).
  double near_duplicate_rate = 0.3;
  // Subset and order of {title, authors, venue, year}.
  std::vector<std::string> attributes = {"title", "authors", "venue", "year"};
  std::string name = "synth";
  std::uint64_t seed = 1;
};

struct SynthCorpus {
  EntityTable left;
  EntityTable right;
  MatchSet matches;  // identity pairing of entity templates
};

// Throws ConfigError when entities < 10 or an attribute is unknown.
SynthCorpus synth_generate(const SynthConfig& config);

// Blocking used for the bundled fixture: title 3-gram Jaccard at a threshold
// chosen so the default corpus keeps about ten candidates per left record.
std::vector<BlockingRule> synth_blocking_rules();
inline constexpr double kSynthTitleThreshold = 0.18;

}  // namespace deeper::data
