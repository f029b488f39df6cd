#include <cmath>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "doctest.h"
#include "deeper/error.hpp"
#include "deeper/log.hpp"
#include "deeper/model/checkpoint.hpp"
#include "deeper/model/er_model.hpp"
#include "gradcheck.hpp"
#include "temp_dir.hpp"

using namespace deeper;
using namespace deeper::model;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;
using Strings = std::vector<std::string>;

namespace {

std::shared_ptr<const text::EmbeddingStore> hashed(std::size_t dim) {
  return std::make_shared<const text::EmbeddingStore>(text::EmbeddingStore::hashed_only(dim));
}

void zero_all(ErModel& m) {
  for (auto& p : m.parameters().all()) p.value.fill(0.0);
}

ErModel toy_model(std::size_t datasets = 0, std::uint64_t seed = 1,
                  std::shared_ptr<const text::EmbeddingStore> store = hashed(8),
                  bool fine_tune = false) {
  auto cfg = ModelConfig::toy();
  cfg.num_datasets = datasets;
  cfg.seed = seed;
  cfg.fine_tune_embeddings = fine_tune;
  return ErModel(cfg, std::move(store));
}

}  // namespace

TEST_CASE("gru cell with zero weights") {
  auto m = toy_model();
  zero_all(m);
  Tape tape(m.parameters());
  const Tensor x = Tensor::vector({1, 2, 3, 4, 5, 6, 7, 8});
  auto h0 = m.gru_cell(tape, Direction::kForward, tape.constant(x), tape.constant(Tensor(Shape::vector(4))));
  CHECK(tape.value(h0) == Tensor(Shape::vector(4)));
  const Tensor v = Tensor::vector({0.4, -1.0, 2.0, 0.25});
  auto h1 = m.gru_cell(tape, Direction::kForward, tape.constant(x), tape.constant(v));
  CHECK(tape.value(h1) == Tensor::vector({0.2, -0.5, 1.0, 0.125}));
}

TEST_CASE("gru cell gradients match finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto m = toy_model(0, seed);
    Rng rng(seed);
    const Tensor x = testing::random_tensor(rng, Shape::vector(8));
    const Tensor h = testing::random_tensor(rng, Shape::vector(4));
    auto result = testing::check_gradients(m.parameters(), [&](Tape& t) {
      Var out = m.gru_cell(t, Direction::kBackward, t.constant(x), t.constant(h));
      return testing::project_to_scalar(t, out, seed);
    });
    CAPTURE(result.worst);
    CHECK(result.max_rel_error <= 1e-4);
  }
}

TEST_CASE("encode attribute") {
  auto m = toy_model();
  SUBCASE("empty value encodes to the zero vector") {
    Tape tape(m.parameters());
    auto v = m.encode_attribute(tape, m.prepare_value(""));
    CHECK(tape.value(v) == Tensor(Shape::vector(8)));
  }
  SUBCASE("production width for an empty value") {
    ErModel big(ModelConfig{}, hashed(300));
    Tape tape(big.parameters());
    CHECK(tape.value(big.encode_attribute(tape, big.prepare_value(""))).size() == 300);
  }
  SUBCASE("single token is the concat of two one-step states") {
    Tape tape(m.parameters());
    auto seq = m.prepare_value("sigmod");
    auto v = tape.value(m.encode_attribute(tape, seq));
    CHECK(v.size() == 8);
    const Tensor zero(Shape::vector(4));
    auto f = tape.value(m.gru_cell(tape, Direction::kForward, tape.constant(seq.vectors[0]), tape.constant(zero)));
    auto b = tape.value(m.gru_cell(tape, Direction::kBackward, tape.constant(seq.vectors[0]), tape.constant(zero)));
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(v[i] == f[i]);
      CHECK(v[4 + i] == b[i]);
    }
  }
  SUBCASE("reversing the sequence swaps halves when directions share weights") {
    auto& params = m.parameters();
    const auto fwd = m.gru(Direction::kForward);
    const auto bwd = m.gru(Direction::kBackward);
    const std::pair<ad::ParamId, ad::ParamId> tied[] = {
        {fwd.w_z, bwd.w_z}, {fwd.u_z, bwd.u_z}, {fwd.b_z, bwd.b_z},
        {fwd.w_r, bwd.w_r}, {fwd.u_r, bwd.u_r}, {fwd.b_r, bwd.b_r},
        {fwd.w_h, bwd.w_h}, {fwd.u_h, bwd.u_h}, {fwd.b_h, bwd.b_h}};
    for (auto [f, b] : tied) params[b].value = params[f].value;
    auto seq = m.prepare_value("deep entity resolution");
    auto rev = seq;
    std::reverse(rev.vectors.begin(), rev.vectors.end());
    std::reverse(rev.rows.begin(), rev.rows.end());
    Tape tape(params);
    auto a = tape.value(m.encode_attribute(tape, seq));
    auto r = tape.value(m.encode_attribute(tape, rev));
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(a[i] == r[4 + i]);
      CHECK(a[4 + i] == r[i]);
    }
  }
}

TEST_CASE("similarity layers") {
  CHECK(attribute_similarity(std::vector<double>{1, 2}, std::vector<double>{3, -1}) ==
        std::vector<double>{2, 3});
  const std::vector<double> v{0.5, -2, 7};
  CHECK(attribute_similarity(v, v) == std::vector<double>{0, 0, 0});
  CHECK_THROWS_AS(attribute_similarity(v, std::vector<double>{1}), ShapeError);

  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> a(6), b(6);
    for (auto& x : a) x = rng.uniform(-5, 5);
    for (auto& x : b) x = rng.uniform(-5, 5);
    CHECK(attribute_similarity(a, b) == attribute_similarity(b, a));
  }

  const std::vector<std::vector<double>> sims{{1, 2}, {3, 4}};
  CHECK(record_similarity(sims) == std::vector<double>{4, 6});
  const std::vector<std::vector<double>> single{{1.5, -2}};
  CHECK(record_similarity(single) == std::vector<double>{1.5, -2});
  CHECK_THROWS_AS(record_similarity(std::vector<std::vector<double>>{}), ShapeError);
}

TEST_CASE("record similarity width does not depend on the attribute count") {
  ErModel m(ModelConfig{}, hashed(300));
  const Strings four{"a title", "some authors", "vldb", "2000"};
  const Strings eight{"a", "b c", "d", "", "e", "f g h", "i", "j"};
  auto p4 = m.classify_pair(m.prepare(four, four));
  auto p8 = m.classify_pair(m.prepare(eight, Strings{"x", "b c", "", "", "e", "f", "i", "jj"}));
  CHECK(p4.record_similarity.size() == 300);
  CHECK(p8.record_similarity.size() == 300);
  CHECK(p8.attribute_similarities.size() == 8);
}

TEST_CASE("encoder is universal across attributes") {
  auto m = toy_model(2);
  std::size_t gru_params = 0;
  for (const auto& p : m.parameters().all()) {
    if (p.name.rfind("gru.", 0) == 0) ++gru_params;
  }
  CHECK(gru_params == 18);
  // Every attribute of the pair reads the one recorded node per parameter.
  Tape tape(m.parameters());
  m.forward(tape, m.prepare(Strings{"a b", "c", "d e f"}, Strings{"a", "c d", "f"}));
  std::size_t parameter_nodes = 0;
  for (std::size_t i = 0; i < tape.node_count(); ++i) {
    if (tape.kind(Var{i}) == ad::OpKind::kParameter) ++parameter_nodes;
  }
  CHECK(parameter_nodes == 18 + 2 * 4 + 2);  // GRU + matching highway layers + output
}

TEST_CASE("classify pair") {
  auto m = toy_model();
  const Strings rec{"Deep Learning for ER", "A. Author", "ACL", "2019"};
  const Strings other{"Active learning", "B. Writer", "VLDB", ""};

  SUBCASE("identical records give a zero similarity and the bias-path probability") {
    auto act = m.classify_pair(m.prepare(rec, rec));
    for (double v : act.record_similarity) CHECK(v == 0.0);
    Tape tape(m.parameters());
    auto logits = m.highway_mlp(tape, m.matching_head(),
                                tape.constant(Tensor(Shape::vector(m.config().mlp_width()))));
    CHECK(act.match_probability == ad::softmax(tape.value(logits).values())[kMatch]);
    auto other_identical = m.classify_pair(m.prepare(other, other));
    CHECK(other_identical.match_probability == act.match_probability);
  }
  SUBCASE("probabilities sum to one") {
    auto act = m.classify_pair(m.prepare(rec, other));
    CHECK(std::fabs(act.matching_probabilities[0] + act.matching_probabilities[1] - 1.0) <= 1e-12);
    CHECK(act.match_probability >= 0.0);
    CHECK(act.match_probability <= 1.0);
  }
  SUBCASE("attribute order does not matter") {
    const double p = m.match_probability(m.prepare(rec, other));
    const Strings rec_perm{rec[2], rec[0], rec[3], rec[1]};
    const Strings other_perm{other[2], other[0], other[3], other[1]};
    CHECK(m.match_probability(m.prepare(rec_perm, other_perm)) == doctest::Approx(p).epsilon(1e-12));
  }
  SUBCASE("deterministic") {
    auto pair = m.prepare(rec, other);
    CHECK(m.match_probability(pair) == m.match_probability(pair));
  }
  SUBCASE("mismatched sides are rejected") {
    CHECK_THROWS_AS(m.prepare(rec, Strings{"x"}), ShapeError);
    CHECK_THROWS_AS(m.classify_pair(PreparedPair{}), ShapeError);
  }
}

TEST_CASE("highway gate extremes") {
  auto m = toy_model();
  auto& params = m.parameters();
  const auto layer = m.matching_head().layers[0];
  Rng rng(8);
  const Tensor x = testing::random_tensor(rng, Shape::vector(8));
  params[layer.gate_w].value.fill(0.0);

  params[layer.gate_b].value.fill(-1000.0);
  {
    Tape tape(params);
    CHECK(tape.value(m.highway_layer(tape, layer, tape.constant(x))) == x);
  }
  params[layer.gate_b].value.fill(1000.0);
  {
    Tape tape(params);
    auto y = tape.value(m.highway_layer(tape, layer, tape.constant(x)));
    auto t = tape.value(tape.relu(tape.add(tape.matmul(tape.parameter(layer.transform_w), tape.constant(x)),
                                           tape.parameter(layer.transform_b))));
    // x + 1 * (t - x) only rounds back to t.
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::fabs(y[i] - t[i]) <= 1e-12);
  }
}

TEST_CASE("dataset classifier") {
  SUBCASE("requires at least two datasets") {
    CHECK_THROWS_AS(toy_model(1), ConfigError);
    auto m = toy_model(0);
    Tape tape(m.parameters());
    CHECK_THROWS_AS(m.dataset_logits(tape, tape.constant(Tensor(Shape::vector(8)))), ConfigError);
  }
  SUBCASE("output width equals the dataset count") {
    auto m = toy_model(3);
    Tape tape(m.parameters());
    auto g = m.forward(tape, m.prepare(Strings{"a"}, Strings{"b"}));
    CHECK(tape.value(m.dataset_logits(tape, g.record_similarity)).size() == 3);
  }
  SUBCASE("forward pass does not depend on lambda") {
    auto cfg = ModelConfig::toy();
    cfg.num_datasets = 2;
    std::vector<std::vector<double>> outs;
    for (double lambda : {0.0, 1.0, 5.0}) {
      cfg.reversal_lambda = lambda;
      ErModel m(cfg, hashed(8));
      Tape tape(m.parameters());
      auto g = m.forward(tape, m.prepare(Strings{"a b"}, Strings{"b c"}));
      outs.push_back(tape.value(m.dataset_logits(tape, g.record_similarity)).storage());
    }
    CHECK(outs[0] == outs[1]);
    CHECK(outs[1] == outs[2]);
  }
  SUBCASE("encoder gradient of the dataset loss is negated by the reversal") {
    auto m = toy_model(2, 3);
    const auto pair = m.prepare(Strings{"deep er", "x"}, Strings{"deep entity", "y z"});
    auto grads = [&](bool reversed) {
      Tape tape(m.parameters());
      auto g = m.forward(tape, pair);
      Var logits = reversed ? m.dataset_logits(tape, g.record_similarity)
                            : m.highway_mlp(tape, *m.dataset_head(), g.record_similarity);
      return tape.backward(tape.softmax_nll(logits, 1));
    };
    const auto with = grads(true);
    const auto without = grads(false);
    for (auto id : m.encoder_parameters()) {
      for (std::size_t i = 0; i < with[id].size(); ++i) CHECK(with[id][i] == -without[id][i]);
    }
    const auto& head = *m.dataset_head();
    CHECK(with[head.out_w] == without[head.out_w]);
  }
}

TEST_CASE("end-to-end gradients on the toy configuration") {
  testing::TempDir dir;
  std::string content = "4 8\n";
  Rng rng(21);
  for (const char* tok : {"deep", "entity", "resolution", "vldb"}) {
    content += tok;
    for (int j = 0; j < 8; ++j) content += " " + std::to_string(rng.uniform(-0.5, 0.5));
    content += "\n";
  }
  auto store = std::make_shared<const text::EmbeddingStore>(
      text::EmbeddingStore::load(dir.write("emb.txt", content)));
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto m = toy_model(2, seed, store, /*fine_tune=*/true);
    REQUIRE(m.embedding_parameter());
    const auto pair = m.prepare(Strings{"Deep Entity resolution", "vldb", ""},
                                Strings{"deep resolution models", "sigmod", "2019"});
    auto result = testing::check_gradients(m.parameters(), [&](Tape& t) {
      auto g = m.forward(t, pair);
      Var terms[] = {t.softmax_nll(g.matching_logits, seed % 2)};
      return t.sum(terms);
    });
    CAPTURE(result.worst);
    CHECK(result.max_rel_error <= 1e-4);
    CHECK(result.checked == m.parameters().scalar_count());
  }
}

TEST_CASE("checkpoint round trip") {
  testing::TempDir dir;
  auto store = hashed(8);
  auto m = toy_model(2, 5, store);
  const auto path = dir.path() / "model.bin";
  CheckpointMetadata meta;
  meta.schema = Schema(Strings{"title", "authors"});
  meta.datasets = {"src", "tgt"};
  meta.hyperparameters = {{"epochs", 20}};
  save_model(m, path, meta);

  auto loaded = load_model(path, store);
  CHECK(loaded.metadata.schema == meta.schema);
  CHECK(loaded.metadata.datasets == meta.datasets);
  CHECK(loaded.metadata.hyperparameters["epochs"] == 20);
  const auto& a = m.parameters().all();
  const auto& b = loaded.model.parameters().all();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    for (std::size_t j = 0; j < a[i].value.size(); ++j) {
      CHECK(b[i].value[j] == static_cast<double>(static_cast<float>(a[i].value[j])));
    }
  }
  // Same decisions on a fixed batch.
  const std::string batch[][2] = {{"alpha beta", "x"}, {"alpha", "y"}, {"gamma", ""}, {"", "q"}};
  for (const auto& l : batch) {
    for (const auto& r : batch) {
      auto pair = m.prepare(Strings{l[0], l[1]}, Strings{r[0], r[1]});
      CHECK((m.match_probability(pair) >= 0.5) ==
            (loaded.model.match_probability(pair) >= 0.5));
    }
  }

  SUBCASE("tampered magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("X", 1);
    f.close();
    CHECK_THROWS_AS(load_model(path, store), ParseError);
  }
  SUBCASE("different embeddings are refused unless forced") {
    text::NgramHashConfig other;
    other.seed = 1234;
    auto other_store = std::make_shared<const text::EmbeddingStore>(
        text::EmbeddingStore::hashed_only(8, other));
    CHECK_THROWS_AS(load_model(path, other_store), ConfigError);
    int warnings = 0;
    auto prev = set_warning_sink([&](std::string_view) { ++warnings; });
    CHECK_NOTHROW(load_model(path, other_store, true));
    set_warning_sink(prev);
    CHECK(warnings == 1);
  }
  SUBCASE("truncated body") {
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
    CHECK_THROWS_AS(load_model(path, store), ParseError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_model(dir.path() / "nope.bin", store), IoError);
  }
}
