#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "deeper/active/learner.hpp"
#include "deeper/data/synth.hpp"
#include "deeper/model/checkpoint.hpp"
#include "deeper/pipeline/dataset.hpp"
#include "deeper/pipeline/run_config.hpp"
#include "json.hpp"
#include "temp_dir.hpp"

namespace deeper::testing {

// Small model settings shared by the session fixtures.
inline nlohmann::json small_model_json() { return {{"embedding_dim", 8}, {"hidden", 8}}; }

inline pipeline::RunConfig small_run_config() {
  return pipeline::RunConfig::from_json({{"model", small_model_json()}});
}

// A data root with:
//   synth/      prepared synthetic dataset with gold labels
//   unlabeled/  the same tables prepared without matches
//   warm.ckpt   small model trained on a different synthetic corpus
class ServeDataRoot {
 public:
  explicit ServeDataRoot(std::size_t entities = 100) {
    data::SynthConfig sc;
    sc.entities = entities;
    sc.seed = 7;
    const auto corpus = data::synth_generate(sc);
    const auto raw = dir_.path() / "raw";
    data::write_table(corpus.left, raw / "left.csv");
    data::write_table(corpus.right, raw / "right.csv");
    data::write_matches(corpus.matches, raw / "matches.csv");

    pipeline::PrepareOptions opt;
    opt.left = raw / "left.csv";
    opt.right = raw / "right.csv";
    opt.matches = raw / "matches.csv";
    opt.rules = data::synth_blocking_rules();
    opt.out = root() / "synth";
    opt.seed = 3;
    pipeline::prepare_dataset(opt);
    opt.matches.reset();
    opt.out = root() / "unlabeled";
    pipeline::prepare_dataset(opt);

    // Transfer-style initialization from an unrelated corpus.
    data::SynthConfig src = sc;
    src.seed = 99;
    const auto source = data::synth_generate(src);
    const auto cfg = small_run_config();
    auto model = pipeline::build_model(cfg);
    const auto cs = data::block(source.left, source.right, data::synth_blocking_rules(), {},
                                &source.matches);
    const auto examples = train::prepare_examples(model, cs, source.left, source.right);
    train::TrainConfig tc;
    tc.epochs = 8;
    tc.adam.lr = 0.01;
    train::train_supervised(model, examples, examples, tc);
    model::save_model(model, root() / "warm.ckpt",
                      pipeline::checkpoint_metadata(cfg, source.left.schema(), {"source"}));
  }

  std::filesystem::path root() const { return dir_.path() / "root"; }
  std::filesystem::path journal() const { return dir_.path() / "journal"; }

  // Gold labels of the synth dataset's pool and test pairs, by pair id.
  std::map<std::string, int> gold() const {
    const auto ds = pipeline::load_prepared(root() / "synth");
    std::map<std::string, int> out;
    for (const auto* cs : {&ds.train, &ds.dev, &ds.test}) {
      for (const auto& p : cs->pairs) out[active::pair_id(p.left, p.right)] = *p.label;
    }
    return out;
  }

 private:
  TempDir dir_;
};

inline nlohmann::json session_body(std::size_t K = 20, std::size_t T = 3, bool gold = true,
                                   const std::string& dataset = "synth") {
  return {{"dataset", dataset},
          {"init", "checkpoint"},
          {"checkpoint", "warm.ckpt"},
          {"attach_gold", gold},
          {"config", {{"K", K}, {"iterations", T}, {"max_epochs", 2}}}};
}

}  // namespace deeper::testing
