#include "deeper/pipeline/run_config.hpp"

#include "deeper/data/csv.hpp"
#include "deeper/error.hpp"

namespace deeper::pipeline {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys,
                    const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* k : keys) known = known || key == k;
    if (!known) throw ConfigError("unknown " + where + " key '" + key + "'");
  }
}

}  // namespace

json EmbeddingSpec::to_json() const {
  return {{"path", path ? json(path->string()) : json(nullptr)}};
}

EmbeddingSpec EmbeddingSpec::from_json(const json& j) {
  reject_unknown(j, {"path"}, "embeddings");
  EmbeddingSpec spec;
  if (j.contains("path") && !j.at("path").is_null()) {
    if (!j.at("path").is_string()) throw ConfigError("embeddings.path must be a string");
    spec.path = j.at("path").get<std::string>();
  }
  return spec;
}

std::shared_ptr<const text::EmbeddingStore> EmbeddingSpec::load(std::size_t dim) const {
  if (!path) return std::make_shared<const text::EmbeddingStore>(text::EmbeddingStore::hashed_only(dim));
  auto store = std::make_shared<const text::EmbeddingStore>(text::EmbeddingStore::load(*path));
  if (store->dim() != dim) {
    throw ConfigError("embedding file " + path->string() + " has width " +
                      std::to_string(store->dim()) + " but model.embedding_dim is " +
                      std::to_string(dim));
  }
  return store;
}

model::ModelConfig model_config_from_partial(const json& j, const model::ModelConfig& base) {
  reject_unknown(j,
                 {"embedding_dim", "hidden", "highway_layers", "num_datasets", "reversal_lambda",
                  "fine_tune_embeddings", "seed"},
                 "model");
  json merged = model::to_json(base);
  merged.update(j);
  try {
    return model::model_config_from_json(merged);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
}

void RunConfig::validate() const {
  if (model.embedding_dim == 0 || model.hidden == 0) {
    throw ConfigError("model.embedding_dim and model.hidden must be positive");
  }
  if (model.reversal_lambda < 0) throw ConfigError("model.reversal_lambda must be >= 0");
  train.validate();
  active.validate();
  for (const auto& rule : blocking) data::validate_rule(rule);
}

json RunConfig::to_json() const {
  json rules = json::array();
  for (const auto& rule : blocking) rules.push_back(data::rule_to_json(rule));
  json m = model::to_json(model);
  m.erase("num_datasets");
  return {{"model", m},
          {"embeddings", embeddings.to_json()},
          {"train", train.to_json()},
          {"active", active.to_json()},
          {"blocking", rules},
          {"threads", train.threads}};
}

RunConfig RunConfig::from_json(const json& j) {
  reject_unknown(j, {"model", "embeddings", "train", "active", "blocking", "threads"}, "config");
  RunConfig c;
  if (j.contains("model")) {
    if (j.at("model").contains("num_datasets")) {
      throw ConfigError("model.num_datasets is chosen by the command, not the config");
    }
    c.model = model_config_from_partial(j.at("model"));
  }
  if (j.contains("embeddings")) c.embeddings = EmbeddingSpec::from_json(j.at("embeddings"));
  if (j.contains("train")) c.train = train::TrainConfig::from_json(j.at("train"));
  try {
    if (j.contains("threads")) c.train.threads = j.at("threads").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad threads: ") + e.what());
  }
  c.active.train = c.train;
  if (j.contains("active")) {
    json a = j.at("active");
    if (a.is_object() && !a.contains("train")) a["train"] = c.train.to_json();
    c.active = active::ALConfig::from_json(a);
    c.active.train.threads = c.train.threads;
  }
  if (j.contains("blocking")) {
    if (!j.at("blocking").is_array()) throw ConfigError("blocking must be an array of rules");
    for (const auto& r : j.at("blocking")) c.blocking.push_back(data::rule_from_json(r));
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(data::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

model::ErModel build_model(const RunConfig& config, std::size_t num_datasets) {
  auto m = config.model;
  m.num_datasets = num_datasets;
  return model::ErModel(m, config.embeddings.load(m.embedding_dim));
}

model::CheckpointMetadata checkpoint_metadata(const RunConfig& config, const Schema& schema,
                                              std::vector<std::string> datasets, json extra) {
  model::CheckpointMetadata meta;
  meta.schema = schema;
  meta.datasets = std::move(datasets);
  meta.hyperparameters = config.to_json();
  if (!extra.is_object()) throw ConfigError("checkpoint extra metadata must be an object");
  for (const auto& [key, value] : extra.items()) meta.hyperparameters[key] = value;
  return meta;
}

model::LoadedModel load_checkpoint(const std::filesystem::path& path,
                                   const std::optional<EmbeddingSpec>& embeddings) {
  // The manifest is read twice: once to learn which embeddings to build.
  const std::string bytes = data::read_file(path);
  const std::size_t magic = sizeof(model::kCheckpointMagic) - 1;
  if (bytes.size() < magic + 8 || bytes.compare(0, magic, model::kCheckpointMagic) != 0) {
    throw ParseError(path.string() + " is not a checkpoint (bad magic)");
  }
  std::uint64_t length = 0;
  for (int i = 7; i >= 0; --i) {
    length = (length << 8) | static_cast<unsigned char>(bytes[magic + i]);
  }
  if (length > bytes.size() - magic - 8) throw ParseError(path.string() + ": truncated manifest");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(magic + 8, length));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": bad manifest: " + e.what());
  }
  EmbeddingSpec spec;
  if (embeddings) {
    spec = *embeddings;
  } else {
    const auto& hp = manifest.value("hyperparameters", json::object());
    if (hp.contains("embeddings")) spec = EmbeddingSpec::from_json(hp.at("embeddings"));
  }
  std::size_t dim = 0;
  try {
    dim = manifest.at("model").at("embedding_dim").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": bad manifest: " + e.what());
  }
  return model::load_model(path, spec.load(dim));
}

}  // namespace deeper::pipeline
