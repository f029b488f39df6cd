#include "deeper/serve/session.hpp"

#include <set>

#include "deeper/log.hpp"

namespace deeper::serve {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(SessionState s) {
  switch (s) {
    case SessionState::kIdle:
      return "idle";
    case SessionState::kAwaitingLabels:
      return "awaiting-labels";
    case SessionState::kTraining:
      return "training";
    case SessionState::kFinished:
      return "finished";
  }
  return "?";
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys,
                    const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* k : keys) known = known || key == k;
    if (!known) throw ConfigError("unknown field '" + key + "' in " + where);
  }
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

}  // namespace

json SessionRequest::to_json() const {
  json j = {{"dataset", dataset},
            {"config", config.to_json()},
            {"init", init_from_checkpoint ? "checkpoint" : "random"},
            {"attach_gold", attach_gold}};
  if (init_from_checkpoint) {
    j["checkpoint"] = checkpoint;
  } else {
    j["model"] = model;
  }
  if (embeddings) j["embeddings"] = embeddings->to_json();
  return j;
}

SessionRequest SessionRequest::from_json(const json& j) {
  reject_unknown(j, {"dataset", "config", "init", "checkpoint", "model", "embeddings",
                     "attach_gold"},
                 "session request");
  SessionRequest r;
  if (!j.contains("dataset")) throw ConfigError("session request needs a dataset");
  r.dataset = field<std::string>(j, "dataset", "request");
  if (j.contains("config")) r.config = active::ALConfig::from_json(j.at("config"));
  const std::string init = j.contains("init") ? field<std::string>(j, "init", "request") : "random";
  if (init == "checkpoint") {
    r.init_from_checkpoint = true;
    if (!j.contains("checkpoint")) throw ConfigError("init 'checkpoint' needs a checkpoint path");
    r.checkpoint = field<std::string>(j, "checkpoint", "request");
    if (j.contains("model")) throw ConfigError("model settings apply to a random init only");
  } else if (init == "random") {
    if (j.contains("checkpoint")) throw ConfigError("checkpoint given but init is 'random'");
    if (j.contains("model")) {
      r.model = j.at("model");
      // Validates the keys now so a bad body is a 400, not a failure later.
      auto m = pipeline::model_config_from_partial(r.model);
      if (m.num_datasets != 0) throw ConfigError("model.num_datasets must be 0 for a session");
    }
  } else {
    throw ConfigError("init must be 'random' or 'checkpoint', got '" + init + "'");
  }
  if (j.contains("embeddings")) r.embeddings = pipeline::EmbeddingSpec::from_json(j.at("embeddings"));
  if (j.contains("attach_gold")) r.attach_gold = field<bool>(j, "attach_gold", "request");
  return r;
}

std::vector<SubmittedLabel> parse_label_submission(const json& j) {
  reject_unknown(j, {"labels"}, "label submission");
  if (!j.contains("labels") || !j.at("labels").is_array()) {
    throw ConfigError("label submission needs a 'labels' array");
  }
  std::vector<SubmittedLabel> out;
  for (const auto& item : j.at("labels")) {
    reject_unknown(item, {"pair_id", "label"}, "label entry");
    if (!item.contains("pair_id") || !item.contains("label")) {
      throw ConfigError("every label entry needs pair_id and label");
    }
    SubmittedLabel l;
    l.pair_id = field<std::string>(item, "pair_id", "label entry");
    const auto value = field<std::string>(item, "label", "label entry");
    if (value == "match") {
      l.label = 1;
    } else if (value == "non_match") {
      l.label = 0;
    } else {
      throw ConfigError("label must be 'match' or 'non_match', got '" + value + "'");
    }
    out.push_back(std::move(l));
  }
  return out;
}

Session::Session(std::string id, SessionRequest request, const SessionContext& context)
    : id_(std::move(id)), request_(std::move(request)), context_(context) {}

Session::Session(std::string id, SessionRequest request, const SessionContext& context,
                 const std::optional<fs::path>& journal_path)
    : Session(std::move(id), std::move(request), context) {
  replaying_ = true;
  initialize();
  replaying_ = false;
  if (journal_path) {
    journal_ = std::make_unique<Journal>(*journal_path);
    journal({{"event", "create"}, {"session_id", id_}, {"request", request_.to_json()}});
    std::lock_guard lock(mu_);
    if (state_ == SessionState::kAwaitingLabels) journal(selection_event_locked());
  }
}

void Session::initialize() {
  fs::path dir;
  try {
    dir = pipeline::resolve_dataset(context_.data_root, request_.dataset);
    dataset_ = pipeline::load_prepared(dir);
  } catch (const IoError& e) {
    throw ApiError(409, e.what());
  } catch (const ParseError& e) {
    throw ApiError(409, std::string("dataset is not a valid prepared dataset: ") + e.what());
  }
  if (request_.attach_gold && !dataset_.labeled()) {
    throw ApiError(409, "dataset '" + request_.dataset + "' has no gold labels to attach");
  }

  if (request_.init_from_checkpoint) {
    fs::path path = request_.checkpoint;
    if (path.is_relative()) path = context_.data_root / path;
    if (!fs::is_regular_file(path)) throw ApiError(409, "checkpoint not found: " + path.string());
    try {
      auto loaded = pipeline::load_checkpoint(path, request_.embeddings);
      model_ = std::make_unique<model::ErModel>(std::move(loaded.model));
    } catch (const ParseError& e) {
      throw ApiError(409, std::string("checkpoint is unreadable: ") + e.what());
    }
  } else {
    pipeline::RunConfig rc;
    rc.model = pipeline::model_config_from_partial(request_.model);
    if (request_.embeddings) rc.embeddings = *request_.embeddings;
    model_ = std::make_unique<model::ErModel>(pipeline::build_model(rc));
  }

  auto config = request_.config;
  config.train.threads = context_.threads;
  const auto pool_pairs = request_.attach_gold ? dataset_.train_and_dev()
                                               : pipeline::strip_labels(dataset_.train_and_dev());
  auto pool = pipeline::examples(*model_, dataset_, pool_pairs, 0, context_.threads);
  std::vector<train::Example> test;
  if (request_.attach_gold) test = pipeline::examples(*model_, dataset_, dataset_.test, 0, context_.threads);
  learner_ = std::make_unique<active::ActiveLearner>(*model_, std::move(pool), config,
                                                     std::move(test));
  learner_->set_epoch_observer([this](const train::EpochMetrics& row) {
    if (row.split != "dev") return;
    std::lock_guard lock(mu_);
    if (progress_) progress_->first = row.epoch;
  });
  if (!learner_->finished()) learner_->select();
  std::lock_guard lock(mu_);
  prepare_iteration_locked();
}

void Session::journal(const json& event) {
  if (replaying_ || !journal_) return;
  journal_->append(event);
}

json Session::selection_event_locked() const {
  const auto& sel = learner_->select();
  return {{"event", "selection"},
          {"iteration", iteration_},
          {"human", sel.human()},
          {"proxy_positive", sel.hc_pos},
          {"proxy_negative", sel.hc_neg}};
}

void Session::prepare_iteration_locked() {
  pending_.clear();
  submitted_.clear();
  progress_.reset();
  if (learner_->finished()) {
    state_ = SessionState::kFinished;
    iteration_ = learner_->iteration();
    batch_ = nullptr;
    return;
  }
  const auto& sel = learner_->select();
  iteration_ = learner_->iteration() + 1;
  for (const auto& id : sel.likely_fp) pending_.emplace_back(id, "likely_fp");
  for (const auto& id : sel.likely_fn) pending_.emplace_back(id, "likely_fn");
  json pairs = json::array();
  for (const auto& [id, bucket] : pending_) pairs.push_back(pair_json(id, bucket));
  batch_ = {{"session_id", id_}, {"iteration", iteration_}, {"pairs", pairs}};
  state_ = SessionState::kAwaitingLabels;
}

json Session::pair_json(const std::string& pair_id, const std::string& bucket) const {
  const auto& ex = learner_->example(pair_id);
  const auto& attrs = dataset_.schema().attributes();
  const auto& l = dataset_.left.at(ex.left_id);
  const auto& r = dataset_.right.at(ex.right_id);
  json left = json::object(), right = json::object();
  for (std::size_t i = 0; i < attrs.size(); ++i) {
    left[attrs[i]] = l.values[i];
    right[attrs[i]] = r.values[i];
  }
  return {{"pair_id", pair_id},
          {"left_id", ex.left_id},
          {"right_id", ex.right_id},
          {"left", left},
          {"right", right},
          {"probability", learner_->select().probability.at(pair_id)},
          {"bucket", bucket}};
}

SessionState Session::state() const {
  std::lock_guard lock(mu_);
  return state_;
}

json Session::batch() const {
  std::lock_guard lock(mu_);
  if (state_ != SessionState::kAwaitingLabels) {
    throw ApiError(409, "no batch to label while the session is " + to_string(state_),
                   {{"state", to_string(state_)}});
  }
  return batch_;
}

json Session::submit(const std::vector<SubmittedLabel>& labels) {
  std::lock_guard lock(mu_);
  if (state_ != SessionState::kAwaitingLabels) {
    throw ApiError(409, "labels are accepted only while awaiting labels; session is " +
                            to_string(state_),
                   {{"state", to_string(state_)}});
  }
  std::set<std::string> seen;
  for (const auto& l : labels) {
    const bool pending = std::any_of(pending_.begin(), pending_.end(),
                                     [&](const auto& p) { return p.first == l.pair_id; });
    if (!pending) {
      throw ApiError(404, "pair '" + l.pair_id + "' is not in the pending batch",
                     {{"pair_id", l.pair_id}});
    }
    if (submitted_.count(l.pair_id) || !seen.insert(l.pair_id).second) {
      throw ApiError(409, "pair '" + l.pair_id + "' already has a label",
                     {{"pair_id", l.pair_id}});
    }
  }
  json entries = json::array();
  for (const auto& l : labels) entries.push_back({{"pair_id", l.pair_id}, {"label", l.label}});
  // Persist before acknowledging.
  journal({{"event", "label"}, {"iteration", iteration_}, {"labels", entries}});
  for (const auto& l : labels) submitted_[l.pair_id] = l.label;
  return {{"accepted", labels.size()}, {"remaining", pending_.size() - submitted_.size()}};
}

json Session::begin_advance() {
  std::lock_guard lock(mu_);
  if (state_ != SessionState::kAwaitingLabels) {
    throw ApiError(409, "cannot advance while the session is " + to_string(state_),
                   {{"state", to_string(state_)}});
  }
  json missing = json::array();
  for (const auto& [id, bucket] : pending_) {
    if (!submitted_.count(id)) missing.push_back(id);
  }
  if (!missing.empty()) {
    throw ApiError(409, std::to_string(missing.size()) + " pending pairs still need labels",
                   {{"missing", missing}});
  }
  journal({{"event", "advance"}, {"iteration", iteration_}});
  state_ = SessionState::kTraining;
  last_error_.reset();
  progress_ = std::make_pair(std::size_t{0}, request_.config.max_epochs);
  return {{"session_id", id_}, {"state", to_string(state_)}, {"iteration", iteration_}};
}

void Session::run_training() {
  std::map<std::string, int> labels;
  {
    std::lock_guard lock(mu_);
    if (state_ != SessionState::kTraining) return;
    labels = submitted_;
  }
  // The learner is touched only here while the state is training.
  active::IterationLog log;
  try {
    log = learner_->complete(labels);
    if (!learner_->finished()) learner_->select();
  } catch (const std::exception& e) {
    std::lock_guard lock(mu_);
    warn("session " + id_ + ": training failed: " + e.what());
    state_ = SessionState::kAwaitingLabels;
    last_error_ = e.what();
    progress_.reset();
    journal({{"event", "advance_failed"}, {"iteration", iteration_}, {"error", e.what()}});
    return;
  }
  std::lock_guard lock(mu_);
  logs_.push_back(log);
  journal({{"event", "iteration_complete"}, {"iteration", iteration_}, {"log", log.to_json()}});
  prepare_iteration_locked();
  if (state_ == SessionState::kAwaitingLabels) journal(selection_event_locked());
}

json Session::status() const {
  std::lock_guard lock(mu_);
  json j = {{"session_id", id_},
            {"dataset", request_.dataset},
            {"state", to_string(state_)},
            {"iteration", iteration_},
            {"iterations", request_.config.iterations},
            {"completed_iterations", logs_.size()},
            {"K", request_.config.K},
            {"pending", pending_.size()},
            {"labeled_pending", submitted_.size()},
            {"remaining", pending_.size() - submitted_.size()},
            {"attach_gold", request_.attach_gold}};
  j["progress"] = progress_ ? json{{"epoch", progress_->first}, {"epochs", progress_->second}}
                            : json(nullptr);
  j["last_error"] = last_error_ ? json(*last_error_) : json(nullptr);
  return j;
}

json Session::log_json(const active::IterationLog& log) const {
  json j = log.to_json();
  if (!request_.attach_gold) {
    for (const char* k : {"fp", "tp", "fn", "tn", "proxy_errors", "test_f1"}) j[k] = nullptr;
  }
  return j;
}

json Session::metrics() const {
  std::lock_guard lock(mu_);
  json history = json::array();
  for (const auto& log : logs_) history.push_back(log_json(log));
  return {{"session_id", id_}, {"history", history}};
}

std::vector<active::IterationLog> Session::logs() const {
  std::lock_guard lock(mu_);
  return logs_;
}

std::unique_ptr<Session> Session::replay(const fs::path& journal_path,
                                         const SessionContext& context) {
  const auto events = Journal::read(journal_path);
  const std::string where = journal_path.string();
  if (events.empty() || events[0].value("event", "") != "create") {
    throw ParseError(where + ": journal does not start with a create event");
  }
  try {
    return replay_events(events, journal_path, context);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": malformed journal event: " + e.what());
  }
}

std::unique_ptr<Session> Session::replay_events(const std::vector<json>& events,
                                                const fs::path& journal_path,
                                                const SessionContext& context) {
  const std::string where = journal_path.string();
  std::unique_ptr<Session> s(new Session(events[0].at("session_id").get<std::string>(),
                                         SessionRequest::from_json(events[0].at("request")),
                                         context));
  s->replaying_ = true;
  s->initialize();
  auto diverged = [&](std::size_t i, const std::string& what) {
    return ParseError(where + " event " + std::to_string(i + 1) + ": replay diverged (" + what +
                      ")");
  };
  for (std::size_t i = 1; i < events.size(); ++i) {
    const auto& e = events[i];
    const std::string kind = e.value("event", "");
    if (kind == "selection") {
      std::lock_guard lock(s->mu_);
      if (s->state_ != SessionState::kAwaitingLabels ||
          e.at("iteration").get<std::size_t>() != s->iteration_) {
        throw diverged(i, "selection for an unexpected iteration");
      }
      const auto expected = s->selection_event_locked();
      if (expected.at("human") != e.at("human") ||
          expected.at("proxy_positive") != e.at("proxy_positive") ||
          expected.at("proxy_negative") != e.at("proxy_negative")) {
        throw diverged(i, "different selection");
      }
    } else if (kind == "label") {
      std::vector<SubmittedLabel> labels;
      for (const auto& l : e.at("labels")) {
        labels.push_back({l.at("pair_id").get<std::string>(), l.at("label").get<int>()});
      }
      s->submit(labels);
    } else if (kind == "advance") {
      s->begin_advance();
    } else if (kind == "advance_failed") {
      std::lock_guard lock(s->mu_);
      s->state_ = SessionState::kAwaitingLabels;
      s->last_error_ = e.value("error", "training failed");
      s->progress_.reset();
    } else if (kind == "iteration_complete") {
      s->run_training();
      std::lock_guard lock(s->mu_);
      const auto& recorded = e.at("log");
      if (s->logs_.empty() || s->logs_.size() != e.at("iteration").get<std::size_t>() ||
          s->logs_.back().best_epoch != recorded.at("best_epoch").get<std::size_t>() ||
          s->logs_.back().f1_on_labeled != recorded.at("f1_on_labeled").get<double>()) {
        throw diverged(i, "different training outcome");
      }
    } else {
      throw ParseError(where + ": unknown journal event '" + kind + "'");
    }
  }
  s->replaying_ = false;
  s->journal_ = std::make_unique<Journal>(journal_path);
  return s;
}

}  // namespace deeper::serve
