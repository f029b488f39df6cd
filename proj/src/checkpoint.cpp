#include "deeper/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "deeper/error.hpp"
#include "deeper/log.hpp"

namespace deeper::model {
namespace {

using nlohmann::json;

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, 8);
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f32(std::string& out, double value) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(value));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

float get_f32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

json to_json(const ModelConfig& c) {
  return json{{"embedding_dim", c.embedding_dim},   {"hidden", c.hidden},
              {"highway_layers", c.highway_layers}, {"num_datasets", c.num_datasets},
              {"reversal_lambda", c.reversal_lambda},
              {"fine_tune_embeddings", c.fine_tune_embeddings},
              {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.highway_layers = j.at("highway_layers").get<std::size_t>();
  c.num_datasets = j.at("num_datasets").get<std::size_t>();
  c.reversal_lambda = j.at("reversal_lambda").get<double>();
  c.fine_tune_embeddings = j.at("fine_tune_embeddings").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void save_model(const ErModel& model, const std::filesystem::path& path,
                const CheckpointMetadata& metadata) {
  json tensors = json::array();
  std::string body;
  for (const auto& p : model.parameters().all()) {
    json shape = json::array();
    for (std::size_t a = 0; a < p.value.shape().rank(); ++a) shape.push_back(p.value.shape()[a]);
    tensors.push_back({{"name", p.name}, {"shape", shape}});
    for (double v : p.value.values()) put_f32(body, v);
  }
  const json manifest = {
      {"format_version", kCheckpointVersion},
      {"schema", metadata.schema.attributes()},
      {"datasets", metadata.datasets},
      {"model", to_json(model.config())},
      {"hyperparameters", metadata.hyperparameters},
      {"tokenizer",
       {{"lowercase", model.tokenizer().lowercase},
        {"split_punctuation", model.tokenizer().split_punctuation}}},
      {"embedding_fingerprint", text::fingerprint_hex(model.embeddings().fingerprint())},
      {"tensors", tensors},
  };
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(kCheckpointMagic, 7);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

LoadedModel load_model(const std::filesystem::path& path,
                       std::shared_ptr<const text::EmbeddingStore> embeddings, bool force) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
  if (data.size() < 15 || std::memcmp(data.data(), kCheckpointMagic, 7) != 0) {
    throw ParseError("'" + path.string() + "' is not a checkpoint (bad magic)");
  }
  const std::uint64_t manifest_size = get_u64(bytes + 7);
  if (manifest_size > data.size() - 15) throw ParseError("truncated checkpoint manifest");
  json manifest;
  try {
    manifest = json::parse(data.substr(15, manifest_size));
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed checkpoint manifest: ") + e.what());
  }

  try {
    if (manifest.at("format_version").get<int>() != kCheckpointVersion) {
      throw ParseError("unsupported checkpoint version " + manifest.at("format_version").dump());
    }
    const std::string expected = manifest.at("embedding_fingerprint").get<std::string>();
    const std::string actual = text::fingerprint_hex(embeddings->fingerprint());
    if (expected != actual) {
      const std::string msg = "checkpoint was trained with embeddings " + expected +
                              " but the loaded embeddings are " + actual;
      if (!force) throw ConfigError(msg + " (use force to override)");
      warn(msg);
    }

    text::TokenizerConfig tok;
    tok.lowercase = manifest.at("tokenizer").at("lowercase").get<bool>();
    tok.split_punctuation = manifest.at("tokenizer").at("split_punctuation").get<bool>();
    LoadedModel loaded{ErModel(model_config_from_json(manifest.at("model")), embeddings, tok), {}};
    loaded.metadata.schema = Schema(manifest.at("schema").get<std::vector<std::string>>());
    loaded.metadata.datasets = manifest.at("datasets").get<std::vector<std::string>>();
    loaded.metadata.hyperparameters = manifest.at("hyperparameters");

    auto& params = loaded.model.parameters();
    std::size_t offset = 15 + manifest_size;
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != params.size()) {
      throw ParseError("checkpoint holds " + std::to_string(tensors.size()) +
                       " tensors, model expects " + std::to_string(params.size()));
    }
    for (const auto& t : tensors) {
      const auto name = t.at("name").get<std::string>();
      auto id = params.find(name);
      if (!id) throw ParseError("checkpoint tensor '" + name + "' is unknown to the model");
      auto& value = params[*id].value;
      const auto shape = t.at("shape").get<std::vector<std::size_t>>();
      bool same = shape.size() == value.shape().rank();
      for (std::size_t a = 0; same && a < shape.size(); ++a) same = shape[a] == value.shape()[a];
      if (!same) throw ParseError("checkpoint tensor '" + name + "' has the wrong shape");
      if (offset + 4 * value.size() > data.size()) throw ParseError("truncated checkpoint body");
      for (std::size_t i = 0; i < value.size(); ++i) value[i] = get_f32(bytes + offset + 4 * i);
      offset += 4 * value.size();
    }
    if (offset != data.size()) throw ParseError("trailing bytes after checkpoint body");
    return loaded;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed checkpoint manifest: ") + e.what());
  }
}

}  // namespace deeper::model
