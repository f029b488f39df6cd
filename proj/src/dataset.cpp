#include "deeper/pipeline/dataset.hpp"

#include "deeper/data/csv.hpp"
#include "deeper/error.hpp"
#include "deeper/log.hpp"

namespace deeper::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw IoError(what + " not found: " + p.string());
}

void require_fresh_dir(const fs::path& dir) {
  if (fs::exists(dir) && !(fs::is_directory(dir) && fs::is_empty(dir))) {
    throw ConfigError("output directory " + dir.string() +
                      " already exists and is not empty; choose a new --out");
  }
  fs::create_directories(dir);
}

// Fills missing labels from `gold`; a stated label that disagrees is an error.
void apply_gold(data::CandidateSet& cs, const data::MatchSet& gold) {
  for (auto& p : cs.pairs) {
    const int label = gold.count({p.left, p.right}) ? 1 : 0;
    if (p.label && *p.label != label) {
      throw ConfigError("candidate file labels pair (" + p.left + ", " + p.right + ") as " +
                        std::to_string(*p.label) + " but the matches file says " +
                        std::to_string(label));
    }
    p.label = label;
  }
}

json split_stats(const data::CandidateSet& cs, std::size_t attributes) {
  return data::stats(cs, attributes).to_json();
}

}  // namespace

json prepare_dataset(const PrepareOptions& options) {
  require_file(options.left, "left table");
  require_file(options.right, "right table");
  if (options.matches) require_file(*options.matches, "matches file");
  if (options.rules.empty() == !options.candidates.has_value()) {
    throw ConfigError("give exactly one of blocking rules or a candidate file");
  }
  if (options.candidates) require_file(*options.candidates, "candidate file");

  const auto left = data::load_table(options.left, options.left.stem().string());
  const auto right = data::load_table(options.right, options.right.stem().string());
  if (left.schema() != right.schema()) {
    throw ConfigError("left and right tables must share one schema");
  }
  std::optional<data::MatchSet> gold;
  if (options.matches) gold = data::read_matches(*options.matches);

  data::CandidateSet cs;
  if (options.candidates) {
    cs = data::read_candidates(*options.candidates);
    data::validate_candidates(cs, left, right);
    if (gold) apply_gold(cs, *gold);
    cs.provenance = {{"left_table", left.table_id()},
                     {"right_table", right.table_id()},
                     {"candidate_file", options.candidates->string()}};
  } else {
    cs = data::block(left, right, options.rules, options.block, gold ? &*gold : nullptr);
  }
  const bool labeled = cs.labeled();
  auto parts = data::split(cs, options.seed);

  require_fresh_dir(options.out);
  data::write_table(left, options.out / "left.csv");
  data::write_table(right, options.out / "right.csv");
  if (gold) data::write_matches(*gold, options.out / "matches.csv");
  data::write_candidates(cs, options.out / "candidates.csv");
  data::write_candidates(parts.train, options.out / "train.csv");
  data::write_candidates(parts.dev, options.out / "dev.csv");
  data::write_candidates(parts.test, options.out / "test.csv");
  data::write_file(options.out / "split.json", parts.manifest.dump(2) + "\n");

  const std::size_t attrs = left.schema().size();
  json stats = {{"candidates", split_stats(cs, attrs)},
                {"train", split_stats(parts.train, attrs)},
                {"dev", split_stats(parts.dev, attrs)},
                {"test", split_stats(parts.test, attrs)},
                {"labeled", labeled}};
  if (cs.provenance.contains("matches_lost_by_blocking")) {
    stats["matches_lost_by_blocking"] = cs.provenance["matches_lost_by_blocking"];
  }
  data::write_file(options.out / "stats.json", stats.dump(2) + "\n");

  json rules = json::array();
  for (const auto& r : options.rules) rules.push_back(data::rule_to_json(r));
  json prepare = {{"left", options.left.string()},
                  {"right", options.right.string()},
                  {"left_table", left.table_id()},
                  {"right_table", right.table_id()},
                  {"matches", options.matches ? json(options.matches->string()) : json(nullptr)},
                  {"candidates",
                   options.candidates ? json(options.candidates->string()) : json(nullptr)},
                  {"blocking", rules},
                  {"seed", options.seed},
                  {"provenance", cs.provenance}};
  data::write_file(options.out / "prepare.json", prepare.dump(2) + "\n");
  return stats;
}

bool PreparedDataset::labeled() const {
  return train.labeled() && dev.labeled() && test.labeled();
}

void PreparedDataset::require_labels(const std::string& purpose) const {
  if (!labeled()) {
    throw ConfigError("dataset '" + name + "' has no gold labels, which " + purpose +
                      " needs; prepare it with --matches or a labeled candidate file");
  }
}

data::CandidateSet PreparedDataset::train_and_dev() const {
  data::CandidateSet out;
  out.pairs = train.pairs;
  out.pairs.insert(out.pairs.end(), dev.pairs.begin(), dev.pairs.end());
  out.provenance = train.provenance;
  return out;
}

PreparedDataset load_prepared(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("prepared dataset directory not found: " + dir.string());
  for (const char* f : {"left.csv", "right.csv", "train.csv", "dev.csv", "test.csv",
                        "split.json", "prepare.json"}) {
    require_file(dir / f, std::string("prepared dataset file ") + f);
  }
  json prepare;
  try {
    prepare = json::parse(data::read_file(dir / "prepare.json"));
  } catch (const json::parse_error& e) {
    throw ParseError((dir / "prepare.json").string() + ": " + e.what());
  }
  PreparedDataset ds;
  ds.dir = dir;
  fs::path normal = fs::absolute(dir).lexically_normal();
  if (normal.filename().empty()) normal = normal.parent_path();
  ds.name = normal.filename().string();
  ds.left = data::load_table(dir / "left.csv", prepare.value("left_table", "left"));
  ds.right = data::load_table(dir / "right.csv", prepare.value("right_table", "right"));
  ds.train = data::read_candidates(dir / "train.csv");
  ds.dev = data::read_candidates(dir / "dev.csv");
  ds.test = data::read_candidates(dir / "test.csv");
  for (const auto* cs : {&ds.train, &ds.dev, &ds.test}) {
    data::validate_candidates(*cs, ds.left, ds.right);
  }
  try {
    ds.manifest = json::parse(data::read_file(dir / "split.json"));
  } catch (const json::parse_error& e) {
    throw ParseError((dir / "split.json").string() + ": " + e.what());
  }
  return ds;
}

fs::path resolve_dataset(const fs::path& root, const std::string& name) {
  if (name.empty() || name == "." || name == ".." ||
      name.find_first_of("/\\") != std::string::npos) {
    throw ConfigError("invalid dataset name '" + name + "'");
  }
  const fs::path dir = root / name;
  if (!fs::is_directory(dir)) throw IoError("dataset '" + name + "' not found under " + root.string());
  return dir;
}

std::vector<train::Example> examples(const model::ErModel& model, const PreparedDataset& ds,
                                     const data::CandidateSet& pairs, std::size_t dataset,
                                     std::size_t threads) {
  return train::prepare_examples(model, pairs, ds.left, ds.right, dataset, threads);
}

data::CandidateSet strip_labels(data::CandidateSet pairs) {
  for (auto& p : pairs.pairs) p.label.reset();
  return pairs;
}

}  // namespace deeper::pipeline
