#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "deeper/active/learner.hpp"
#include "deeper/data/candidates.hpp"
#include "deeper/model/checkpoint.hpp"
#include "deeper/model/er_model.hpp"
#include "deeper/train/trainer.hpp"
#include "json.hpp"

namespace deeper::pipeline {

// Word vectors from a text file, or the hashed n-gram scheme alone with the
// model's embedding width when no file is given.
struct EmbeddingSpec {
  std::optional<std::filesystem::path> path;

  nlohmann::json to_json() const;
  static EmbeddingSpec from_json(const nlohmann::json& j);
  // Throws ConfigError when a loaded file's width differs from `dim`.
  std::shared_ptr<const text::EmbeddingStore> load(std::size_t dim) const;
};

// Everything a command needs besides paths. Every key is optional; unknown
// keys are rejected at every level.
struct RunConfig {
  model::ModelConfig model;  // num_datasets is set by the command
  EmbeddingSpec embeddings;
  train::TrainConfig train;
  active::ALConfig active;  // its train settings mirror `train` unless given
  std::vector<data::BlockingRule> blocking;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
};

model::ModelConfig model_config_from_partial(const nlohmann::json& j,
                                             const model::ModelConfig& base = {});

// Randomly initialized model for `config` with the given dataset-head width.
model::ErModel build_model(const RunConfig& config, std::size_t num_datasets = 0);

// Loads a checkpoint, rebuilding its embeddings from the spec stored in the
// checkpoint unless `embeddings` overrides it.
model::LoadedModel load_checkpoint(const std::filesystem::path& path,
                                   const std::optional<EmbeddingSpec>& embeddings = std::nullopt);

// Metadata that lets load_checkpoint rebuild the embeddings.
model::CheckpointMetadata checkpoint_metadata(const RunConfig& config, const Schema& schema,
                                              std::vector<std::string> datasets,
                                              nlohmann::json extra = nlohmann::json::object());

}  // namespace deeper::pipeline
