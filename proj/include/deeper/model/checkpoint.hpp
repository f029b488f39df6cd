#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "deeper/model/er_model.hpp"
#include "deeper/schema.hpp"

namespace deeper::model {

// Checkpoint layout: the 7 magic bytes "DEEPER1", a little-endian uint64
// manifest length, the JSON manifest, then every tensor listed in the
// manifest as little-endian float32 values in manifest order.
inline constexpr char kCheckpointMagic[] = "DEEPER1";
inline constexpr int kCheckpointVersion = 1;

struct CheckpointMetadata {
  Schema schema;
  std::vector<std::string> datasets;
  nlohmann::json hyperparameters = nlohmann::json::object();
};

void save_model(const ErModel& model, const std::filesystem::path& path,
                const CheckpointMetadata& metadata = {});

struct LoadedModel {
  ErModel model;
  CheckpointMetadata metadata;
};

// Throws ParseError on a bad magic/version or malformed body. An embedding
// fingerprint that differs from `embeddings` is refused with ConfigError
// unless `force` is set, in which case only a warning is emitted.
LoadedModel load_model(const std::filesystem::path& path,
                       std::shared_ptr<const text::EmbeddingStore> embeddings, bool force = false);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace deeper::model
