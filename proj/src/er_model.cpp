#include "deeper/model/er_model.hpp"

#include <cmath>

#include "deeper/error.hpp"

namespace deeper::model {

using ad::ParamId;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

ErModel::ErModel(ModelConfig config, std::shared_ptr<const text::EmbeddingStore> embeddings,
                 text::TokenizerConfig tokenizer)
    : config_(config), tokenizer_(tokenizer), embeddings_(std::move(embeddings)) {
  if (!embeddings_) throw ConfigError("model requires an embedding store");
  if (config_.embedding_dim != embeddings_->dim()) {
    throw ConfigError("model embedding dimension " + std::to_string(config_.embedding_dim) +
                      " does not match embedding store dimension " +
                      std::to_string(embeddings_->dim()));
  }
  if (config_.hidden == 0) throw ConfigError("GRU hidden size must be positive");
  if (config_.num_datasets == 1) {
    throw ConfigError("dataset classifier needs at least 2 datasets");
  }

  Rng rng(config_.seed);
  if (config_.fine_tune_embeddings && embeddings_->vocab_size() > 0) {
    Tensor table(Shape::matrix(embeddings_->vocab_size(), embeddings_->dim()),
                 embeddings_->matrix());
    embedding_ = params_.add("embedding", std::move(table));
  }
  gru_forward_ = make_gru(rng, "gru.forward");
  gru_backward_ = make_gru(rng, "gru.backward");
  matching_ = make_head(rng, "matching", 2);
  if (config_.num_datasets >= 2) dataset_ = make_head(rng, "dataset", config_.num_datasets);
}

ParamId ErModel::add_matrix(Rng& rng, const std::string& name, std::size_t rows,
                            std::size_t cols) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  Tensor w(Shape::matrix(rows, cols));
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  return params_.add(name, std::move(w));
}

ParamId ErModel::add_bias(const std::string& name, std::size_t n) {
  return params_.add(name, Tensor(Shape::vector(n)));
}

GruDirectionParams ErModel::make_gru(Rng& rng, const std::string& prefix) {
  const std::size_t h = config_.hidden;
  const std::size_t in = config_.embedding_dim;
  GruDirectionParams p;
  p.w_z = add_matrix(rng, prefix + ".w_z", h, in);
  p.u_z = add_matrix(rng, prefix + ".u_z", h, h);
  p.b_z = add_bias(prefix + ".b_z", h);
  p.w_r = add_matrix(rng, prefix + ".w_r", h, in);
  p.u_r = add_matrix(rng, prefix + ".u_r", h, h);
  p.b_r = add_bias(prefix + ".b_r", h);
  p.w_h = add_matrix(rng, prefix + ".w_h", h, in);
  p.u_h = add_matrix(rng, prefix + ".u_h", h, h);
  p.b_h = add_bias(prefix + ".b_h", h);
  return p;
}

HighwayMlpParams ErModel::make_head(Rng& rng, const std::string& prefix, std::size_t outputs) {
  const std::size_t width = config_.mlp_width();
  HighwayMlpParams head;
  head.outputs = outputs;
  for (std::size_t l = 0; l < config_.highway_layers; ++l) {
    const std::string p = prefix + ".highway" + std::to_string(l);
    HighwayLayerParams layer;
    layer.transform_w = add_matrix(rng, p + ".transform_w", width, width);
    layer.transform_b = add_bias(p + ".transform_b", width);
    layer.gate_w = add_matrix(rng, p + ".gate_w", width, width);
    layer.gate_b = add_bias(p + ".gate_b", width);
    head.layers.push_back(layer);
  }
  head.out_w = add_matrix(rng, prefix + ".out_w", outputs, width);
  head.out_b = add_bias(prefix + ".out_b", outputs);
  return head;
}

std::vector<ParamId> ErModel::encoder_parameters() const {
  std::vector<ParamId> ids;
  for (const auto* g : {&gru_forward_, &gru_backward_}) {
    ids.insert(ids.end(), {g->w_z, g->u_z, g->b_z, g->w_r, g->u_r, g->b_r, g->w_h, g->u_h, g->b_h});
  }
  return ids;
}

TokenSequence ErModel::prepare_value(std::string_view raw) const {
  TokenSequence seq;
  for (const auto& token : text::tokenize(raw, tokenizer_)) {
    seq.rows.push_back(embeddings_->find(token));
    seq.vectors.push_back(Tensor::vector(embeddings_->embed_token(token)));
  }
  return seq;
}

PreparedPair ErModel::prepare(std::span<const std::string> left,
                              std::span<const std::string> right) const {
  if (left.size() != right.size()) {
    throw ShapeError("pair sides have " + std::to_string(left.size()) + " and " +
                     std::to_string(right.size()) + " attributes");
  }
  return {prepare_record(left), prepare_record(right)};
}

PreparedRecordPtr ErModel::prepare_record(std::span<const std::string> values) const {
  auto record = std::make_shared<PreparedRecord>();
  for (const auto& v : values) record->push_back(prepare_value(v));
  return record;
}

Var ErModel::gru_cell(Tape& tape, Direction d, Var x, Var h) const {
  const GruDirectionParams& p = gru(d);
  auto affine = [&](ParamId w, ParamId u, ParamId b, Var hidden_in) {
    Var wx = tape.matmul(tape.parameter(w), x);
    Var uh = tape.matmul(tape.parameter(u), hidden_in);
    Var terms[] = {wx, uh, tape.parameter(b)};
    return tape.sum(terms);
  };
  Var z = tape.sigmoid(affine(p.w_z, p.u_z, p.b_z, h));
  Var r = tape.sigmoid(affine(p.w_r, p.u_r, p.b_r, h));
  Var candidate = tape.tanh(affine(p.w_h, p.u_h, p.b_h, tape.mul(r, h)));
  // (1 - z) * h + z * candidate
  return tape.add(h, tape.mul(z, tape.sub(candidate, h)));
}

Var ErModel::token_input(Tape& tape, const TokenSequence& tokens, std::size_t i) const {
  if (embedding_ && tokens.rows[i]) return tape.gather_row(*embedding_, *tokens.rows[i]);
  return tape.constant(tokens.vectors[i]);
}

Var ErModel::encode_attribute(Tape& tape, const TokenSequence& tokens) const {
  const Tensor zero_hidden(Shape::vector(config_.hidden));
  if (tokens.empty()) return tape.constant(Tensor(Shape::vector(config_.mlp_width())));
  std::vector<Var> inputs;
  inputs.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens.vectors[i].size() != config_.embedding_dim) {
      throw ShapeError("token vector has dimension " + std::to_string(tokens.vectors[i].size()) +
                       ", expected " + std::to_string(config_.embedding_dim));
    }
    inputs.push_back(token_input(tape, tokens, i));
  }
  Var h_fwd = tape.constant(zero_hidden);
  for (Var x : inputs) h_fwd = gru_cell(tape, Direction::kForward, x, h_fwd);
  Var h_bwd = tape.constant(zero_hidden);
  for (auto it = inputs.rbegin(); it != inputs.rend(); ++it) {
    h_bwd = gru_cell(tape, Direction::kBackward, *it, h_bwd);
  }
  Var halves[] = {h_fwd, h_bwd};
  return tape.concat(halves);
}

Var ErModel::highway_layer(Tape& tape, const HighwayLayerParams& layer, Var x) const {
  Var transform = tape.relu(tape.add(tape.matmul(tape.parameter(layer.transform_w), x),
                                     tape.parameter(layer.transform_b)));
  Var gate = tape.sigmoid(
      tape.add(tape.matmul(tape.parameter(layer.gate_w), x), tape.parameter(layer.gate_b)));
  // gate * transform + (1 - gate) * x
  return tape.add(x, tape.mul(gate, tape.sub(transform, x)));
}

Var ErModel::highway_mlp(Tape& tape, const HighwayMlpParams& head, Var x) const {
  for (const auto& layer : head.layers) x = highway_layer(tape, layer, x);
  return tape.add(tape.matmul(tape.parameter(head.out_w), x), tape.parameter(head.out_b));
}

PairGraph ErModel::forward(Tape& tape, const PreparedPair& pair) const {
  if (!pair.left || !pair.right) throw ShapeError("pair has an unprepared side");
  const PreparedRecord& left = *pair.left;
  const PreparedRecord& right = *pair.right;
  if (left.size() != right.size()) {
    throw ShapeError("pair sides have different attribute counts");
  }
  if (left.empty()) throw ShapeError("record similarity over an empty schema");
  PairGraph g;
  for (std::size_t a = 0; a < left.size(); ++a) {
    g.left_attributes.push_back(encode_attribute(tape, left[a]));
    g.right_attributes.push_back(encode_attribute(tape, right[a]));
    g.attribute_similarities.push_back(
        tape.abs_diff(g.left_attributes.back(), g.right_attributes.back()));
  }
  g.record_similarity = tape.sum(g.attribute_similarities);
  g.matching_logits = highway_mlp(tape, matching_, g.record_similarity);
  return g;
}

Var ErModel::dataset_logits(Tape& tape, Var record_similarity) const {
  if (!dataset_) throw ConfigError("model has no dataset classifier (needs >= 2 datasets)");
  Var reversed = tape.gradient_reversal(record_similarity, config_.reversal_lambda);
  return highway_mlp(tape, *dataset_, reversed);
}

PairActivation ErModel::classify_pair(const PreparedPair& pair) const {
  Tape tape(params_);
  const PairGraph g = forward(tape, pair);
  auto values = [&](Var v) { return tape.value(v).storage(); };
  PairActivation act;
  for (Var v : g.left_attributes) act.left_attributes.push_back(values(v));
  for (Var v : g.right_attributes) act.right_attributes.push_back(values(v));
  for (Var v : g.attribute_similarities) act.attribute_similarities.push_back(values(v));
  act.record_similarity = values(g.record_similarity);
  act.matching_probabilities = ad::softmax(tape.value(g.matching_logits).values());
  act.match_probability = act.matching_probabilities[kMatch];
  return act;
}

double ErModel::match_probability(const PreparedPair& pair) const {
  Tape tape(params_);
  const PairGraph g = forward(tape, pair);
  return ad::softmax(tape.value(g.matching_logits).values())[kMatch];
}

std::vector<double> attribute_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("attribute_similarity: lengths " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::fabs(a[i] - b[i]);
  return out;
}

std::vector<double> record_similarity(std::span<const std::vector<double>> similarities) {
  if (similarities.empty()) throw ShapeError("record similarity over an empty schema");
  std::vector<double> out(similarities[0].size(), 0.0);
  for (const auto& s : similarities) {
    if (s.size() != out.size()) throw ShapeError("record_similarity: ragged similarity vectors");
    for (std::size_t i = 0; i < s.size(); ++i) out[i] += s[i];
  }
  return out;
}

}  // namespace deeper::model
