#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deeper/data/candidates.hpp"
#include "deeper/data/table.hpp"
#include "deeper/model/er_model.hpp"
#include "deeper/train/trainer.hpp"
#include "json.hpp"

namespace deeper::pipeline {

// A prepared dataset directory holds:
//   left.csv, right.csv          copies of the input tables
//   matches.csv                  gold matches, when given
//   candidates.csv               the whole candidate set
//   train.csv, dev.csv, test.csv the 3:1:1 split
//   split.json                   split manifest
//   stats.json                   pair and match counts per split
//   prepare.json                 how the directory was produced
struct PrepareOptions {
  std::filesystem::path left;
  std::filesystem::path right;
  std::optional<std::filesystem::path> matches;
  // Exactly one of: blocking rules, or a published candidate file.
  std::vector<data::BlockingRule> rules;
  std::optional<std::filesystem::path> candidates;
  std::filesystem::path out;
  std::uint64_t seed = 1;
  data::BlockOptions block;
};

// Writes a prepared dataset directory and returns its stats JSON. The output
// directory must not exist yet or be empty.
nlohmann::json prepare_dataset(const PrepareOptions& options);

struct PreparedDataset {
  std::string name;  // directory name
  std::filesystem::path dir;
  data::EntityTable left;
  data::EntityTable right;
  data::CandidateSet train, dev, test;
  nlohmann::json manifest;

  const Schema& schema() const { return left.schema(); }
  // True when every split carries gold labels.
  bool labeled() const;
  // Throws ConfigError naming the dataset when it carries no gold labels.
  void require_labels(const std::string& purpose) const;
  // Train and dev pairs together, in that order.
  data::CandidateSet train_and_dev() const;
};

PreparedDataset load_prepared(const std::filesystem::path& dir);

// Resolves `name` under `root`. Names are plain directory names; anything
// that could escape the root is refused with ConfigError. A missing
// directory throws IoError.
std::filesystem::path resolve_dataset(const std::filesystem::path& root, const std::string& name);

std::vector<train::Example> examples(const model::ErModel& model, const PreparedDataset& ds,
                                     const data::CandidateSet& pairs, std::size_t dataset = 0,
                                     std::size_t threads = 0);

// Copy with every label removed.
data::CandidateSet strip_labels(data::CandidateSet pairs);

}  // namespace deeper::pipeline
