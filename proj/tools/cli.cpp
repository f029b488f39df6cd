#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <csignal>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

#include <pthread.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "deeper/active/learner.hpp"
#include "deeper/baselines/features.hpp"
#include "deeper/baselines/learners.hpp"
#include "deeper/data/csv.hpp"
#include "deeper/data/synth.hpp"
#include "deeper/error.hpp"
#include "deeper/model/checkpoint.hpp"
#include "deeper/pipeline/dataset.hpp"
#include "deeper/pipeline/run_config.hpp"
#include "deeper/serve/server.hpp"
#include "deeper/train/metrics.hpp"
#include "deeper/train/trainer.hpp"

namespace deeper::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string absolute_path(const std::string& p) {
  return p.empty() ? p : fs::absolute(p).lexically_normal().string();
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// --config, --config-inline, --out, --seed and --threads.
struct RunOptions {
  std::string config;
  std::string config_inline;
  std::string out;
  std::uint64_t seed = 1;
  std::size_t threads = 0;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* threads_opt = nullptr;
};

void add_run_options(CLI::App* app, RunOptions& o) {
  auto* cfg = app->add_option("--config", o.config, "Run configuration JSON; every key optional")
                  ->check(CLI::ExistingFile)
                  ->transform(absolute_path);
  app->add_option("--config-inline", o.config_inline, "Run configuration as a JSON string")
      ->excludes(cfg);
  app->add_option("--out", o.out, "Output directory (default runs/<time>-<command>-seed<seed>)");
  o.seed_opt = app->add_option("--seed", o.seed, "Seed for initialization and shuffling");
  o.threads_opt = app->add_option("--threads", o.threads, "Worker threads, 0 = all cores");
}

pipeline::RunConfig resolve_config(const RunOptions& o) {
  pipeline::RunConfig rc;
  if (!o.config.empty()) {
    rc = pipeline::RunConfig::load(o.config);
  } else if (!o.config_inline.empty()) {
    json j;
    try {
      j = json::parse(o.config_inline);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("--config-inline is not valid JSON: ") + e.what());
    }
    rc = pipeline::RunConfig::from_json(j);
  }
  if (o.seed_opt && o.seed_opt->count()) {
    rc.model.seed = o.seed;
    rc.train.seed = o.seed;
    rc.active.train.seed = o.seed;
  }
  if (o.threads_opt && o.threads_opt->count()) {
    rc.train.threads = o.threads;
    rc.active.train.threads = o.threads;
  }
  return rc;
}

// Requested directory, or a fresh timestamped one under runs/. Refuses to
// write into a non-empty directory.
fs::path output_dir(const std::string& requested, const std::string& command,
                    std::uint64_t seed) {
  fs::path dir = requested;
  if (dir.empty()) {
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", std::localtime(&now));
    const std::string base = std::string(stamp) + "-" + command + "-seed" + std::to_string(seed);
    dir = fs::path("runs") / base;
    for (int i = 2; fs::exists(dir); ++i) dir = fs::path("runs") / (base + "-" + std::to_string(i));
  }
  if (fs::exists(dir) && !(fs::is_directory(dir) && fs::is_empty(dir))) {
    throw ConfigError("output directory " + dir.string() + " is not empty; outputs are never "
                      "written over existing files");
  }
  fs::create_directories(dir);
  return dir;
}

// Every given option of `app` except the output location and config source,
// as {name: [values]} or {name: true} for flags.
json echo_options(const CLI::App& app) {
  json o = json::object();
  for (const CLI::Option* opt : app.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "out" || name == "config" ||
        name == "config-inline" || opt->count() == 0) {
      continue;
    }
    if (opt->get_expected_min() == 0) {
      o[name] = true;
    } else {
      o[name] = opt->results();
    }
  }
  return o;
}

void write_echo(const fs::path& out, const std::string& command, const CLI::App& app,
                const json& config) {
  json j = {{"command", command}, {"options", echo_options(app)}, {"config", config}};
  data::write_file(out / "config.json", j.dump(2) + "\n");
}

json summary(const std::optional<train::EvalReport>& report) {
  if (!report) return nullptr;
  return {{"precision", report->precision}, {"recall", report->recall}, {"f1", report->f1}};
}

void write_result(const fs::path& out, json result) {
  data::write_file(out / "result.json", result.dump(2) + "\n");
}

void print_dev_rows(train::MetricsLog& log, std::ostream& out) {
  log.set_observer([&out](const train::EpochMetrics& row) {
    if (row.split != "dev") return;
    out << "epoch " << row.epoch << " dev F1 " << fixed(row.report.f1, 2) << " loss "
        << fixed(row.loss, 4) << "\n";
  });
}

std::vector<data::BlockingRule> read_rules(const fs::path& path) {
  json j;
  try {
    j = json::parse(data::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + " is not valid JSON: " + e.what());
  }
  if (j.is_object()) {
    if (j.size() != 1 || !j.contains("blocking")) {
      throw ConfigError(path.string() + ": expected a rule array or {\"blocking\": [...]}");
    }
    j = j.at("blocking");
  }
  if (!j.is_array() || j.empty()) throw ConfigError(path.string() + ": no blocking rules");
  std::vector<data::BlockingRule> rules;
  for (const auto& r : j) rules.push_back(data::rule_from_json(r));
  return rules;
}

// ---------------------------------------------------------------- synth

struct SynthOptions {
  std::string out;
  std::size_t entities = 300;
  std::uint64_t seed = 1;
  double near_duplicate_rate = 0.3;
  bool clean = false;
};

int cmd_synth(const SynthOptions& o, const CLI::App& app, std::ostream& out) {
  data::SynthConfig sc;
  sc.entities = o.entities;
  sc.seed = o.seed;
  sc.near_duplicate_rate = o.near_duplicate_rate;
  if (o.clean) sc.perturbation = data::PerturbationConfig::none();
  const auto corpus = data::synth_generate(sc);
  const fs::path dir = output_dir(o.out, "synth", o.seed);
  data::write_table(corpus.left, dir / "left.csv");
  data::write_table(corpus.right, dir / "right.csv");
  data::write_matches(corpus.matches, dir / "matches.csv");
  json rules = json::array();
  for (const auto& r : data::synth_blocking_rules()) rules.push_back(data::rule_to_json(r));
  data::write_file(dir / "blocking.json", rules.dump(2) + "\n");
  write_echo(dir, "synth", app, nullptr);
  out << "wrote " << corpus.left.size() << " + " << corpus.right.size() << " records and "
      << corpus.matches.size() << " matches to " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- prepare

struct PrepareCliOptions {
  std::string left, right, matches, block, candidates, out;
  std::uint64_t seed = 1;
  std::size_t max_pairs = data::kMaxCandidatePairs;
  bool allow_large = false;
  std::size_t threads = 0;
};

int cmd_prepare(const PrepareCliOptions& o, const CLI::App& app, std::ostream& out) {
  if (o.block.empty() == o.candidates.empty()) {
    throw ConfigError("give exactly one of --block rules.json or --candidates pairs.csv");
  }
  if (o.out.empty()) throw ConfigError("prepare needs --out");
  pipeline::PrepareOptions p;
  p.left = o.left;
  p.right = o.right;
  if (!o.matches.empty()) p.matches = o.matches;
  if (!o.block.empty()) p.rules = read_rules(o.block);
  if (!o.candidates.empty()) p.candidates = o.candidates;
  p.out = o.out;
  p.seed = o.seed;
  p.block.max_pairs = o.max_pairs;
  p.block.allow_large = o.allow_large;
  p.block.threads = o.threads;
  const json stats = pipeline::prepare_dataset(p);
  write_echo(p.out, "prepare", app, nullptr);
  out << stats.dump(2) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
  RunOptions run;
  std::string data;
  std::size_t epochs = 0, batch_size = 0;
  double lr = 0;
};

void apply_train_overrides(const CLI::App& app, pipeline::RunConfig& rc, std::size_t epochs,
                           std::size_t batch_size, double lr) {
  if (app.count("--epochs")) rc.train.epochs = epochs;
  if (app.count("--batch-size")) rc.train.batch_size = batch_size;
  if (app.count("--lr")) rc.train.adam.lr = lr;
  rc.validate();
}

void add_train_overrides(CLI::App* app, std::size_t& epochs, std::size_t& batch_size, double& lr) {
  app->add_option("--epochs", epochs, "Training epochs (default 20)");
  app->add_option("--batch-size", batch_size, "Mini-batch size (default 16)");
  app->add_option("--lr", lr, "Adam learning rate (default 0.001)");
}

std::optional<train::EvalReport> test_report(const model::ErModel& model,
                                             const pipeline::PreparedDataset& ds,
                                             std::size_t threads) {
  if (ds.test.empty() || !ds.test.labeled()) return std::nullopt;
  const auto test = pipeline::examples(model, ds, ds.test, 0, threads);
  return train::evaluate(model, test, train::kDecisionThreshold, threads);
}

int cmd_train(const TrainOptions& o, const CLI::App& app, std::ostream& out) {
  auto rc = resolve_config(o.run);
  apply_train_overrides(app, rc, o.epochs, o.batch_size, o.lr);
  const auto ds = pipeline::load_prepared(o.data);
  ds.require_labels("training");
  const fs::path dir = output_dir(o.run.out, "train", rc.train.seed);
  write_echo(dir, "train", app, rc.to_json());

  auto model = pipeline::build_model(rc);
  const auto threads = rc.train.threads;
  const auto train_ex = pipeline::examples(model, ds, ds.train, 0, threads);
  const auto dev_ex = pipeline::examples(model, ds, ds.dev, 0, threads);
  train::MetricsLog log(dir / "metrics.csv");
  print_dev_rows(log, out);
  const auto result = train::train_supervised(model, train_ex, dev_ex, rc.train, &log);
  model::save_model(model, dir / "model.ckpt",
                    pipeline::checkpoint_metadata(rc, ds.schema(), {ds.name},
                                                  {{"command", "train"}}));
  const auto report = test_report(model, ds, threads);
  std::string curve = "budget,test_f1\n" + std::to_string(train_ex.size()) + ",";
  if (report) curve += fixed(report->f1);
  data::write_file(dir / "curve.csv", curve + "\n");
  write_result(dir, {{"command", "train"},
                     {"mode", "supervised"},
                     {"best_epoch", result.best.epoch},
                     {"dev", result.best.dev.to_json()},
                     {"test", report ? report->to_json() : json(nullptr)},
                     {"summary", summary(report)}});
  out << "best epoch " << result.best.epoch << " dev F1 " << fixed(result.best.dev.f1, 2);
  if (report) out << " test F1 " << fixed(report->f1, 2);
  out << "\nwrote " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- transfer

struct TransferOptions {
  RunOptions run;
  std::vector<std::string> sources;
  std::string target;
  bool adapt = false;
  std::size_t epochs = 0, batch_size = 0;
  double lr = 0;
};

int cmd_transfer(const TransferOptions& o, const CLI::App& app, std::ostream& out) {
  auto rc = resolve_config(o.run);
  apply_train_overrides(app, rc, o.epochs, o.batch_size, o.lr);
  std::vector<pipeline::PreparedDataset> sources;
  for (const auto& s : o.sources) {
    sources.push_back(pipeline::load_prepared(s));
    sources.back().require_labels("transfer training on a source");
  }
  const auto target = pipeline::load_prepared(o.target);
  const std::string mode = o.adapt ? "adversarial" : "supervised";
  const fs::path dir = output_dir(o.run.out, "transfer", rc.train.seed);
  write_echo(dir, "transfer", app, rc.to_json());
  out << "mode: " << mode << "\n";

  const std::size_t s_count = sources.size();
  auto model = pipeline::build_model(rc, o.adapt ? s_count + 1 : 0);
  const auto threads = rc.train.threads;
  std::vector<train::Example> src_train, src_dev;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < s_count; ++i) {
    auto tr = pipeline::examples(model, sources[i], sources[i].train, i, threads);
    auto dv = pipeline::examples(model, sources[i], sources[i].dev, i, threads);
    src_train.insert(src_train.end(), tr.begin(), tr.end());
    src_dev.insert(src_dev.end(), dv.begin(), dv.end());
    names.push_back(sources[i].name);
  }
  train::MetricsLog log(dir / "metrics.csv");
  print_dev_rows(log, out);
  train::TrainResult result;
  if (o.adapt) {
    const auto unlabeled = pipeline::strip_labels(target.train_and_dev());
    const auto tgt = pipeline::examples(model, target, unlabeled, s_count, threads);
    names.push_back(target.name);
    result = train::train_adversarial(model, src_train, src_dev, tgt, rc.train, &log);
  } else {
    result = train::train_supervised(model, src_train, src_dev, rc.train, &log);
  }
  model::save_model(model, dir / "model.ckpt",
                    pipeline::checkpoint_metadata(rc, sources.front().schema(), names,
                                                  {{"command", "transfer"}, {"mode", mode}}));
  const auto report = test_report(model, target, threads);
  write_result(dir, {{"command", "transfer"},
                     {"mode", mode},
                     {"best_epoch", result.best.epoch},
                     {"source_dev", result.best.dev.to_json()},
                     {"test", report ? report->to_json() : json(nullptr)},
                     {"summary", summary(report)}});
  out << "best epoch " << result.best.epoch << " source dev F1 "
      << fixed(result.best.dev.f1, 2);
  if (report) out << " target test F1 " << fixed(report->f1, 2);
  out << "\nwrote " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- active

struct ActiveOptions {
  RunOptions run;
  std::string data;
  std::string annotator = "oracle";
  std::size_t K = 20, T = 10, I = 20;
  std::string strategy;
  bool retain = false;
  std::string init = "checkpoint";
  std::string checkpoint;
  bool attach_gold = false;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string token;
  std::string journal_dir;
};

std::string curve_csv(const std::vector<active::IterationLog>& logs) {
  std::string s = "budget,test_f1\n";
  std::size_t budget = 0;
  for (const auto& l : logs) {
    budget += l.human_labels;
    s += std::to_string(budget) + "," + (l.test_f1 ? fixed(*l.test_f1) : "") + "\n";
  }
  return s;
}

int cmd_active(const ActiveOptions& o, const CLI::App& app, std::ostream& out) {
  auto rc = resolve_config(o.run);
  if (app.count("--K")) rc.active.K = o.K;
  if (app.count("--T")) rc.active.iterations = o.T;
  if (app.count("--I")) rc.active.max_epochs = o.I;
  if (!o.strategy.empty()) rc.active.strategy = active::parse_strategy(o.strategy);
  if (o.retain) rc.active.retain_high_confidence = true;
  rc.validate();
  const bool from_checkpoint = o.init == "checkpoint";
  if (from_checkpoint && o.checkpoint.empty()) {
    throw ConfigError("--init checkpoint needs --checkpoint (or use --init random)");
  }
  if (!from_checkpoint && !o.checkpoint.empty()) {
    throw ConfigError("--checkpoint given but --init is random");
  }
  const auto ds = pipeline::load_prepared(o.data);
  const bool oracle = o.annotator == "oracle";
  if (oracle) ds.require_labels("the oracle annotator");
  const fs::path dir = output_dir(o.run.out, "active", rc.train.seed);
  write_echo(dir, "active", app, rc.to_json());
  const auto threads = rc.train.threads;

  std::vector<active::IterationLog> logs;
  std::size_t human_used = 0;
  json extra = json::object();
  std::optional<train::EvalReport> report;
  auto finish = [&](const model::ErModel& model) {
    model::save_model(model, dir / "model.ckpt",
                      pipeline::checkpoint_metadata(rc, ds.schema(), {ds.name},
                                                    {{"command", "active"}}));
    report = test_report(model, ds, threads);
  };
  auto print_iteration = [&](const active::IterationLog& l) {
    out << "iteration " << l.iteration << ": " << l.human_labels << " human, " << l.proxy_labels
        << " proxy, F1 on labeled " << fixed(l.f1_on_labeled, 2);
    if (l.test_f1) out << ", test F1 " << fixed(*l.test_f1, 2);
    out << "\n" << std::flush;
  };

  if (oracle) {
    model::ErModel model = from_checkpoint ? pipeline::load_checkpoint(o.checkpoint).model
                                           : pipeline::build_model(rc);
    auto pool = pipeline::examples(model, ds, ds.train_and_dev(), 0, threads);
    auto test = pipeline::examples(model, ds, ds.test, 0, threads);
    active::OracleAnnotator annotator(active::gold_labels(pool));
    active::ActiveLearner learner(model, std::move(pool), rc.active, std::move(test));
    while (!learner.finished()) print_iteration(learner.iterate(annotator));
    logs = learner.logs();
    human_used = learner.human_labels_used();
    extra["oracle_requests"] = annotator.requests();
    std::string labels = "pair_id,label,provenance,model_version\n";
    for (const auto& [id, e] : learner.labeled()) {
      labels += data::format_csv_row({id, std::to_string(e.label), active::to_string(e.provenance),
                                      std::to_string(e.model_version)}) +
                "\n";
    }
    data::write_file(dir / "labels.csv", labels);
    finish(model);
  } else {
    serve::ServerOptions so;
    so.data_root = fs::absolute(ds.dir).lexically_normal().parent_path();
    if (so.data_root.filename().empty()) so.data_root = so.data_root.parent_path();
    so.journal_dir = o.journal_dir.empty() ? dir / "journal" : fs::path(o.journal_dir);
    so.token = o.token;
    so.host = o.host;
    so.port = o.port;
    so.threads = threads;
    serve::Server server(so);
    json body = {{"dataset", ds.name},
                 {"config", rc.active.to_json()},
                 {"attach_gold", o.attach_gold}};
    if (from_checkpoint) {
      body["init"] = "checkpoint";
      body["checkpoint"] = absolute_path(o.checkpoint);
    } else {
      json m = model::to_json(rc.model);
      m.erase("num_datasets");
      body["init"] = "random";
      body["model"] = m;
      body["embeddings"] = rc.embeddings.to_json();
    }
    auto session = server.create_session(body);
    const int port = server.start();
    out << "serving session " << session->id() << " at http://" << o.host << ":" << port
        << "/sessions/" << session->id() << "/batch\n"
        << std::flush;
    server.wait_finished(session->id());
    server.stop();
    logs = session->logs();
    for (const auto& l : logs) {
      human_used += l.human_labels;
      print_iteration(l);
    }
    extra["session_id"] = session->id();
    extra["journal"] = (so.journal_dir / (session->id() + ".jsonl")).string();
    finish(session->model());
  }

  data::write_file(dir / "iterations.csv", active::iteration_csv(logs));
  data::write_file(dir / "curve.csv", curve_csv(logs));
  json iterations = json::array();
  for (const auto& l : logs) iterations.push_back(l.to_json());
  json result = {{"command", "active"},
                 {"annotator", o.annotator},
                 {"strategy", active::to_string(rc.active.strategy)},
                 {"human_labels_used", human_used},
                 {"iterations", iterations},
                 {"test", report ? report->to_json() : json(nullptr)},
                 {"summary", summary(report)}};
  for (const auto& [k, v] : extra.items()) result[k] = v;
  write_result(dir, result);
  out << "human labels used: " << human_used << "\n";
  if (report) out << "test F1 " << fixed(report->f1, 2) << "\n";
  out << "wrote " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
  std::string data, checkpoint, split = "test", out;
  std::size_t threads = 0;
};

int cmd_eval(const EvalOptions& o, const CLI::App& app, std::ostream& out) {
  const auto ds = pipeline::load_prepared(o.data);
  const data::CandidateSet& cs = o.split == "train" ? ds.train : o.split == "dev" ? ds.dev : ds.test;
  if (cs.empty() || !cs.labeled()) {
    throw ConfigError("the " + o.split + " split of dataset '" + ds.name +
                      "' has no gold labels; evaluation needs a dataset prepared with --matches "
                      "or a labeled candidate file");
  }
  const auto loaded = pipeline::load_checkpoint(o.checkpoint);
  const auto ex = pipeline::examples(loaded.model, ds, cs, 0, o.threads);
  const auto report = train::evaluate(loaded.model, ex, train::kDecisionThreshold, o.threads);
  const fs::path dir = output_dir(o.out, "eval", loaded.model.config().seed);
  write_echo(dir, "eval", app, nullptr);
  write_result(dir, {{"command", "eval"},
                     {"split", o.split},
                     {"test", report.to_json()},
                     {"summary", summary(report)}});
  out << report.to_json().dump(2) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- baseline

struct BaselineOptions {
  std::string data, algo = "logreg", out;
  double lr = 0.5;
  std::size_t epochs = 500;
  std::size_t threads = 0;
};

int cmd_baseline(const BaselineOptions& o, const CLI::App& app, std::ostream& out) {
  const auto ds = pipeline::load_prepared(o.data);
  ds.require_labels("a baseline");
  if (o.epochs == 0 || !(o.lr > 0)) throw ConfigError("--epochs and --lr must be positive");
  const fs::path dir = output_dir(o.out, "baseline", 0);
  write_echo(dir, "baseline", app, nullptr);
  const auto train_fx = baselines::extract_features(ds.train, ds.left, ds.right, o.threads);
  const auto test_fx = baselines::extract_features(ds.test, ds.left, ds.right, o.threads);
  baselines::write_feature_csv(train_fx, ds.train, dir / "features_train.csv");
  baselines::write_feature_csv(test_fx, ds.test, dir / "features_test.csv");
  std::vector<double> probs;
  json params;
  if (o.algo == "logreg") {
    std::vector<double> trace;
    const auto p = baselines::train_logreg(train_fx.rows, train_fx.labels, {o.lr, o.epochs}, &trace);
    for (const auto& row : test_fx.rows) probs.push_back(baselines::predict(p, row));
    params = baselines::to_json(p);
    std::string loss = "epoch,loss\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
      loss += std::to_string(i + 1) + "," + fixed(trace[i], 8) + "\n";
    }
    data::write_file(dir / "loss.csv", loss);
  } else {
    const auto p = baselines::train_gnb(train_fx.rows, train_fx.labels);
    for (const auto& row : test_fx.rows) probs.push_back(baselines::predict(p, row));
    params = baselines::to_json(p);
  }
  params["features"] = train_fx.names;
  data::write_file(dir / "model.json", params.dump(2) + "\n");
  const auto report = train::evaluate_predictions(probs, test_fx.labels);
  write_result(dir, {{"command", "baseline"},
                     {"algo", o.algo},
                     {"test", report.to_json()},
                     {"summary", summary(report)}});
  out << o.algo << " test F1 " << fixed(report.f1, 2) << "\nwrote " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- repeat

struct RepeatOptions {
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string out;
};

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

int cmd_repeat(const RepeatOptions& o, const std::vector<std::string>& wrapped, std::ostream& out,
               std::ostream& err) {
  if (wrapped.empty()) throw ConfigError("repeat needs a command to run, e.g. repeat -- train ...");
  if (wrapped.front() == "repeat") throw ConfigError("repeat cannot wrap itself");
  for (const auto& a : wrapped) {
    if (a == "--seed" || a.rfind("--seed=", 0) == 0 || a == "--out" || a.rfind("--out=", 0) == 0) {
      throw ConfigError("repeat sets --seed and --out of the wrapped command itself");
    }
  }
  if (o.seeds.empty()) throw ConfigError("--seeds is empty");
  const fs::path dir = output_dir(o.out, "repeat", o.seeds.front());
  const std::vector<std::string> metrics = {"precision", "recall", "f1"};
  std::map<std::string, std::vector<double>> values;
  std::string per_seed = "seed,precision,recall,f1\n";
  for (std::size_t i = 0; i < o.seeds.size(); ++i) {
    const auto seed = o.seeds[i];
    const fs::path run_dir = dir / ("run" + std::to_string(i + 1) + "-seed" + std::to_string(seed));
    auto args = wrapped;
    args.insert(args.end(), {"--seed", std::to_string(seed), "--out", run_dir.string()});
    out << "== seed " << seed << "\n" << std::flush;
    const int code = run(args, out, err);
    if (code != kExitOk) {
      err << "error: repetition with seed " << seed << " failed (exit " << code << ")\n";
      return code;
    }
    const json result = json::parse(data::read_file(run_dir / "result.json"));
    if (!result.contains("summary") || result.at("summary").is_null()) {
      throw ConfigError("the wrapped command reported no test metrics to aggregate");
    }
    per_seed += std::to_string(seed);
    for (const auto& m : metrics) {
      const double v = result.at("summary").at(m).get<double>();
      values[m].push_back(v);
      per_seed += "," + fixed(v);
    }
    per_seed += "\n";
  }
  data::write_file(dir / "per_seed.csv", per_seed);
  std::string agg = "metric,mean,std,n\n";
  json aggregate = json::object();
  for (const auto& m : metrics) {
    const auto& v = values[m];
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    const double sd = sample_std(v, mean);
    agg += m + "," + fixed(mean) + "," + fixed(sd) + "," + std::to_string(v.size()) + "\n";
    aggregate[m] = {{"mean", mean}, {"std", sd}, {"n", v.size()}};
    out << m << " " << fixed(mean, 2) << " ± " << fixed(sd, 2) << "\n";
  }
  data::write_file(dir / "aggregate.csv", agg);
  json echo = {{"command", "repeat"}, {"seeds", o.seeds}, {"wrapped", wrapped}};
  data::write_file(dir / "config.json", echo.dump(2) + "\n");
  data::write_file(dir / "aggregate.json", aggregate.dump(2) + "\n");
  out << "wrote " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- serve

struct ServeCliOptions {
  serve::ServerOptions server;
  std::string data_root, journal_dir = "journal";
};

int cmd_serve(ServeCliOptions o, std::ostream& out) {
  o.server.data_root = o.data_root;
  o.server.journal_dir = o.journal_dir;
  // SIGINT/SIGTERM stop the server from a dedicated thread.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  serve::Server server(o.server);
  const int port = server.bind();
  out << "listening on http://" << o.server.host << ":" << port << " with "
      << server.recovered_sessions() << " recovered sessions\n"
      << std::flush;
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.run();
  // run() returned without a signal only on a listener failure.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return kExitOk;
}

// ---------------------------------------------------------------- rerun

int cmd_rerun(const std::string& from, const std::string& out_dir, std::ostream& out,
              std::ostream& err) {
  json echo;
  try {
    echo = json::parse(data::read_file(from));
  } catch (const json::parse_error& e) {
    throw ConfigError(from + " is not valid JSON: " + e.what());
  }
  if (!echo.contains("command") || !echo.contains("options")) {
    throw ConfigError(from + " is not a resolved-config echo");
  }
  std::vector<std::string> args = {echo.at("command").get<std::string>()};
  if (args.front() == "repeat" || args.front() == "rerun") {
    throw ConfigError("cannot rerun '" + args.front() + "'");
  }
  for (const auto& [name, value] : echo.at("options").items()) {
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back("--" + name);
      continue;
    }
    for (const auto& v : value) args.insert(args.end(), {"--" + name, v.get<std::string>()});
  }
  if (echo.contains("config") && !echo.at("config").is_null()) {
    args.insert(args.end(), {"--config-inline", echo.at("config").dump()});
  }
  args.insert(args.end(), {"--out", out_dir});
  return run(args, out, err);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Entity resolution with transferable deep models and active learning"};
  app.name("deeper");
  app.require_subcommand(1);

  SynthOptions synth;
  auto* s_synth = app.add_subcommand("synth", "Generate a synthetic citation-matching corpus");
  s_synth->add_option("--out", synth.out, "Output directory")->required();
  s_synth->add_option("--entities", synth.entities, "Number of entities (default 300)");
  s_synth->add_option("--seed", synth.seed, "Generator seed");
  s_synth->add_option("--near-duplicate-rate", synth.near_duplicate_rate,
                      "Share of entities with a near-duplicate title");
  s_synth->add_flag("--clean", synth.clean, "Copy right records without perturbations");

  PrepareCliOptions prep;
  auto* s_prep = app.add_subcommand("prepare", "Block (or ingest candidates) and split 3:1:1");
  s_prep->add_option("--left", prep.left, "Left table CSV")->required()->check(CLI::ExistingFile)
      ->transform(absolute_path);
  s_prep->add_option("--right", prep.right, "Right table CSV")->required()
      ->check(CLI::ExistingFile)->transform(absolute_path);
  s_prep->add_option("--matches", prep.matches, "Gold matches CSV left_id,right_id")
      ->check(CLI::ExistingFile)->transform(absolute_path);
  s_prep->add_option("--block", prep.block, "Blocking rules JSON")->check(CLI::ExistingFile)
      ->transform(absolute_path);
  s_prep->add_option("--candidates", prep.candidates, "Published candidate set CSV")
      ->check(CLI::ExistingFile)->transform(absolute_path);
  s_prep->add_option("--out", prep.out, "Output directory")->required();
  s_prep->add_option("--seed", prep.seed, "Split seed");
  s_prep->add_option("--max-pairs", prep.max_pairs, "Candidate pair guard");
  s_prep->add_flag("--allow-large", prep.allow_large, "Only warn above the pair guard");
  s_prep->add_option("--threads", prep.threads, "Worker threads, 0 = all cores");

  TrainOptions tr;
  auto* s_train = app.add_subcommand("train", "Supervised training on a prepared dataset");
  s_train->add_option("--data", tr.data, "Prepared dataset directory")->required()
      ->check(CLI::ExistingDirectory)->transform(absolute_path);
  add_run_options(s_train, tr.run);
  add_train_overrides(s_train, tr.epochs, tr.batch_size, tr.lr);

  TransferOptions tf;
  auto* s_transfer = app.add_subcommand("transfer", "Train on source datasets for a target");
  s_transfer->add_option("--source", tf.sources, "Prepared source dataset (repeatable)")
      ->required()->check(CLI::ExistingDirectory)->transform(absolute_path);
  s_transfer->add_option("--target", tf.target, "Prepared target dataset")->required()
      ->check(CLI::ExistingDirectory)->transform(absolute_path);
  s_transfer->add_flag("--adapt", tf.adapt, "Dataset adaptation through gradient reversal");
  add_run_options(s_transfer, tf.run);
  add_train_overrides(s_transfer, tf.epochs, tf.batch_size, tf.lr);

  ActiveOptions ac;
  auto* s_active = app.add_subcommand("active", "Active learning on a prepared target dataset");
  s_active->add_option("--data", ac.data, "Prepared dataset directory")->required()
      ->check(CLI::ExistingDirectory)->transform(absolute_path);
  s_active->add_option("--annotator", ac.annotator, "oracle (gold labels) or serve (HTTP)")
      ->check(CLI::IsMember({"oracle", "serve"}));
  s_active->add_option("--K", ac.K, "Human labels per iteration (default 20)");
  s_active->add_option("--T", ac.T, "Iterations (default 10)");
  s_active->add_option("--I", ac.I, "Maximum epochs per iteration (default 20)");
  s_active->add_option("--strategy", ac.strategy,
                       "topk, high_conf, partition or high_conf_partition (default)")
      ->check(CLI::IsMember({"topk", "high_conf", "partition", "high_conf_partition"}));
  s_active->add_flag("--retain-high-confidence", ac.retain,
                     "Keep proxy-labeled pairs in the unlabeled pool");
  s_active->add_option("--init", ac.init, "checkpoint (transfer) or random")
      ->check(CLI::IsMember({"checkpoint", "random"}));
  s_active->add_option("--checkpoint", ac.checkpoint, "Initial model checkpoint")
      ->check(CLI::ExistingFile)->transform(absolute_path);
  s_active->add_flag("--attach-gold", ac.attach_gold,
                     "Served sessions report breakdowns against the dataset's gold labels");
  s_active->add_option("--host", ac.host, "Served: listen address");
  s_active->add_option("--port", ac.port, "Served: port, 0 picks a free one");
  s_active->add_option("--token", ac.token, "Served: bearer token");
  s_active->add_option("--journal-dir", ac.journal_dir, "Served: journal directory")
      ->transform(absolute_path);
  add_run_options(s_active, ac.run);

  EvalOptions ev;
  auto* s_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a prepared split");
  s_eval->add_option("--data", ev.data, "Prepared dataset directory")->required()
      ->check(CLI::ExistingDirectory)->transform(absolute_path);
  s_eval->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required()
      ->check(CLI::ExistingFile)->transform(absolute_path);
  s_eval->add_option("--split", ev.split, "train, dev or test")
      ->check(CLI::IsMember({"train", "dev", "test"}));
  s_eval->add_option("--out", ev.out, "Output directory");
  s_eval->add_option("--threads", ev.threads, "Worker threads, 0 = all cores");

  BaselineOptions bl;
  auto* s_base = app.add_subcommand("baseline", "Similarity-feature baseline learners");
  s_base->add_option("--data", bl.data, "Prepared dataset directory")->required()
      ->check(CLI::ExistingDirectory)->transform(absolute_path);
  s_base->add_option("--algo", bl.algo, "logreg or gnb")->check(CLI::IsMember({"logreg", "gnb"}));
  s_base->add_option("--lr", bl.lr, "Logistic regression step size (default 0.5)");
  s_base->add_option("--epochs", bl.epochs, "Logistic regression epochs (default 500)");
  s_base->add_option("--out", bl.out, "Output directory");
  s_base->add_option("--threads", bl.threads, "Worker threads, 0 = all cores");
  // Accepted for uniform seeding under repeat; the baselines are deterministic.
  std::uint64_t unused_seed = 0;
  s_base->add_option("--seed", unused_seed, "Ignored; baselines are deterministic");

  RepeatOptions rp;
  auto* s_repeat = app.add_subcommand(
      "repeat", "Run a command once per seed and report mean and sample std of test metrics");
  s_repeat->add_option("--seeds", rp.seeds, "Seeds (default 1 2 3 4 5)")->delimiter(',');
  s_repeat->add_option("--out", rp.out, "Output directory");
  s_repeat->prefix_command();
  s_repeat->footer("Example: deeper repeat --seeds 1,2,3 -- train --data prepared/");

  ServeCliOptions sv;
  auto* s_serve = app.add_subcommand("serve", "HTTP labeling service for active learning");
  s_serve->add_option("--data-root", sv.data_root, "Directory of prepared datasets")->required()
      ->check(CLI::ExistingDirectory);
  s_serve->add_option("--journal-dir", sv.journal_dir, "Session journal directory");
  s_serve->add_option("--host", sv.server.host, "Listen address");
  s_serve->add_option("--port", sv.server.port, "Port, 0 picks a free one");
  s_serve->add_option("--token", sv.server.token, "Bearer token; empty disables auth");
  s_serve->add_option("--threads", sv.server.threads, "Worker threads, 0 = all cores");

  std::string rerun_from, rerun_out;
  auto* s_rerun = app.add_subcommand("rerun", "Run a command again from its echoed config.json");
  s_rerun->add_option("--from", rerun_from, "config.json written by an earlier run")->required()
      ->check(CLI::ExistingFile);
  s_rerun->add_option("--out", rerun_out, "New output directory")->required();

  // Everything after `repeat ... --` belongs to the wrapped command.
  std::vector<std::string> own = args;
  std::vector<std::string> wrapped;
  if (!own.empty() && own.front() == "repeat") {
    const auto mark = std::find(own.begin(), own.end(), "--");
    if (mark != own.end()) {
      wrapped.assign(mark + 1, own.end());
      own.erase(mark, own.end());
    }
  }
  std::vector<std::string> reversed(own.rbegin(), own.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*s_synth) return cmd_synth(synth, *s_synth, out);
    if (*s_prep) return cmd_prepare(prep, *s_prep, out);
    if (*s_train) return cmd_train(tr, *s_train, out);
    if (*s_transfer) return cmd_transfer(tf, *s_transfer, out);
    if (*s_active) return cmd_active(ac, *s_active, out);
    if (*s_eval) return cmd_eval(ev, *s_eval, out);
    if (*s_base) return cmd_baseline(bl, *s_base, out);
    if (*s_repeat) {
      auto rest = s_repeat->remaining();
      rest.insert(rest.end(), wrapped.begin(), wrapped.end());
      return cmd_repeat(rp, rest, out, err);
    }
    if (*s_serve) return cmd_serve(sv, out);
    if (*s_rerun) return cmd_rerun(rerun_from, rerun_out, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace deeper::cli
