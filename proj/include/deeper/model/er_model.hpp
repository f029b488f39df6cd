#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deeper/autodiff/parameters.hpp"
#include "deeper/autodiff/tape.hpp"
#include "deeper/random.hpp"
#include "deeper/schema.hpp"
#include "deeper/text/embedding.hpp"
#include "deeper/text/tokenizer.hpp"

namespace deeper::model {

struct ModelConfig {
  std::size_t embedding_dim = 300;
  std::size_t hidden = 150;
  std::size_t highway_layers = 2;
  // Width of the dataset classifier output; 0 disables it, otherwise >= 2.
  std::size_t num_datasets = 0;
  double reversal_lambda = 1.0;
  bool fine_tune_embeddings = false;
  std::uint64_t seed = 1;

  // Highway layers carry x through unchanged, so their width is the width
  // of the record similarity vector: both GRU directions concatenated.
  std::size_t mlp_width() const { return 2 * hidden; }

  // Small dimensions for gradient checks and fast tests.
  static ModelConfig toy() {
    ModelConfig c;
    c.embedding_dim = 8;
    c.hidden = 4;
    return c;
  }
};

enum class Direction { kForward, kBackward };

struct GruDirectionParams {
  ad::ParamId w_z, u_z, b_z;
  ad::ParamId w_r, u_r, b_r;
  ad::ParamId w_h, u_h, b_h;
};

struct HighwayLayerParams {
  ad::ParamId transform_w, transform_b;
  ad::ParamId gate_w, gate_b;
};

struct HighwayMlpParams {
  std::vector<HighwayLayerParams> layers;
  ad::ParamId out_w, out_b;
  std::size_t outputs = 0;
};

// Embedded tokens of one attribute value. `rows[i]` is the vocabulary row of
// token i, or empty for an out-of-vocabulary token.
struct TokenSequence {
  std::vector<ad::Tensor> vectors;
  std::vector<std::optional<std::size_t>> rows;

  std::size_t size() const { return vectors.size(); }
  bool empty() const { return vectors.empty(); }
};

// One token sequence per schema attribute. Shared between all candidate
// pairs that mention the record.
using PreparedRecord = std::vector<TokenSequence>;
using PreparedRecordPtr = std::shared_ptr<const PreparedRecord>;

struct PreparedPair {
  PreparedRecordPtr left;
  PreparedRecordPtr right;
};

struct PairActivation {
  std::vector<std::vector<double>> left_attributes;
  std::vector<std::vector<double>> right_attributes;
  std::vector<std::vector<double>> attribute_similarities;
  std::vector<double> record_similarity;
  std::vector<double> matching_probabilities;  // {non-match, match}
  double match_probability = 0.0;
};

// Tape handles for the matching path of one pair.
struct PairGraph {
  std::vector<ad::Var> left_attributes;
  std::vector<ad::Var> right_attributes;
  std::vector<ad::Var> attribute_similarities;
  ad::Var record_similarity;
  ad::Var matching_logits;
};

inline constexpr std::size_t kNonMatch = 0;
inline constexpr std::size_t kMatch = 1;

// BiGRU attribute encoder shared by every attribute and dataset, absolute
// difference attribute similarity, summed record similarity and two
// structurally identical highway-MLP heads (matching and dataset).
class ErModel {
 public:
  ErModel(ModelConfig config, std::shared_ptr<const text::EmbeddingStore> embeddings,
          text::TokenizerConfig tokenizer = {});

  const ModelConfig& config() const { return config_; }
  const text::TokenizerConfig& tokenizer() const { return tokenizer_; }
  const text::EmbeddingStore& embeddings() const { return *embeddings_; }
  std::shared_ptr<const text::EmbeddingStore> embeddings_ptr() const { return embeddings_; }

  ad::ParameterSet& parameters() { return params_; }
  const ad::ParameterSet& parameters() const { return params_; }
  const GruDirectionParams& gru(Direction d) const {
    return d == Direction::kForward ? gru_forward_ : gru_backward_;
  }
  const HighwayMlpParams& matching_head() const { return matching_; }
  const std::optional<HighwayMlpParams>& dataset_head() const { return dataset_; }
  std::optional<ad::ParamId> embedding_parameter() const { return embedding_; }
  // Parameter ids read by the attribute encoder (both directions).
  std::vector<ad::ParamId> encoder_parameters() const;

  TokenSequence prepare_value(std::string_view raw) const;
  PreparedRecordPtr prepare_record(std::span<const std::string> values) const;
  PreparedPair prepare(std::span<const std::string> left, std::span<const std::string> right) const;

  ad::Var gru_cell(ad::Tape& tape, Direction d, ad::Var x, ad::Var h) const;
  ad::Var encode_attribute(ad::Tape& tape, const TokenSequence& tokens) const;
  ad::Var highway_layer(ad::Tape& tape, const HighwayLayerParams& layer, ad::Var x) const;
  ad::Var highway_mlp(ad::Tape& tape, const HighwayMlpParams& head, ad::Var x) const;
  PairGraph forward(ad::Tape& tape, const PreparedPair& pair) const;
  // Gradient reversal followed by the dataset head. Throws ConfigError when
  // the model has no dataset classifier.
  ad::Var dataset_logits(ad::Tape& tape, ad::Var record_similarity) const;

  PairActivation classify_pair(const PreparedPair& pair) const;
  double match_probability(const PreparedPair& pair) const;

 private:
  ad::ParamId add_matrix(Rng& rng, const std::string& name, std::size_t rows, std::size_t cols);
  ad::ParamId add_bias(const std::string& name, std::size_t n);
  GruDirectionParams make_gru(Rng& rng, const std::string& prefix);
  HighwayMlpParams make_head(Rng& rng, const std::string& prefix, std::size_t outputs);
  ad::Var token_input(ad::Tape& tape, const TokenSequence& tokens, std::size_t i) const;

  ModelConfig config_;
  text::TokenizerConfig tokenizer_;
  std::shared_ptr<const text::EmbeddingStore> embeddings_;
  ad::ParameterSet params_;
  std::optional<ad::ParamId> embedding_;
  GruDirectionParams gru_forward_{};
  GruDirectionParams gru_backward_{};
  HighwayMlpParams matching_;
  std::optional<HighwayMlpParams> dataset_;
};

// Value-level versions of the similarity layers.
std::vector<double> attribute_similarity(std::span<const double> a, std::span<const double> b);
std::vector<double> record_similarity(std::span<const std::vector<double>> similarities);

}  // namespace deeper::model
