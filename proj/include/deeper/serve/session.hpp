#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "deeper/active/learner.hpp"
#include "deeper/error.hpp"
#include "deeper/pipeline/dataset.hpp"
#include "deeper/pipeline/run_config.hpp"
#include "deeper/serve/journal.hpp"
#include "json.hpp"

namespace deeper::serve {

// Failure carrying the HTTP status it maps to and an optional JSON detail.
class ApiError : public Error {
 public:
  ApiError(int status, const std::string& message, nlohmann::json detail = nullptr)
      : Error(message), status_(status), detail_(std::move(detail)) {}
  int status() const { return status_; }
  const nlohmann::json& detail() const { return detail_; }

 private:
  int status_;
  nlohmann::json detail_;
};

enum class SessionState { kIdle, kAwaitingLabels, kTraining, kFinished };
std::string to_string(SessionState s);

// Body of POST /sessions.
struct SessionRequest {
  std::string dataset;  // directory name under the data root
  active::ALConfig config;
  bool init_from_checkpoint = false;
  std::string checkpoint;  // relative to the data root unless absolute
  nlohmann::json model = nlohmann::json::object();  // partial model config, random init only
  // Embeddings for a random init; a checkpoint brings its own unless given.
  std::optional<pipeline::EmbeddingSpec> embeddings;
  // Use the dataset's gold labels for the per-iteration breakdown and test F1.
  bool attach_gold = false;

  nlohmann::json to_json() const;
  // Throws ConfigError on malformed bodies and unknown fields.
  static SessionRequest from_json(const nlohmann::json& j);
};

// One label of a LabelSubmission; label is 1 for "match", 0 for "non_match".
struct SubmittedLabel {
  std::string pair_id;
  int label = 0;
};
// Parses {"labels": [{"pair_id": ..., "label": "match"|"non_match"}]}.
std::vector<SubmittedLabel> parse_label_submission(const nlohmann::json& j);

struct SessionContext {
  std::filesystem::path data_root;
  std::size_t threads = 0;
};

// One interactive active-learning run. Handlers may call any public member
// concurrently; training (run_training) is the only long operation and runs
// without holding the session lock, while the other members see the
// "training" state and refuse to touch the learner.
class Session {
 public:
  // Loads the dataset and model and computes the first selection. Throws
  // ApiError 409 when the dataset or checkpoint is missing, ConfigError on
  // bad settings. Once that succeeded, events go to a journal at
  // `journal_path` when given.
  Session(std::string id, SessionRequest request, const SessionContext& context,
          const std::optional<std::filesystem::path>& journal_path);

  // Rebuilds a session by replaying a journal; a pending advance is left in
  // the training state for the caller to run.
  static std::unique_ptr<Session> replay(const std::filesystem::path& journal_path,
                                         const SessionContext& context);

  const std::string& id() const { return id_; }
  const SessionRequest& request() const { return request_; }
  SessionState state() const;

  nlohmann::json batch() const;
  // Persists the labels, then returns {accepted, remaining}. 404 for a pair
  // outside the pending batch, 409 for a duplicate, nothing kept on error.
  nlohmann::json submit(const std::vector<SubmittedLabel>& labels);
  // Moves to training; 409 listing missing ids when labels are incomplete.
  nlohmann::json begin_advance();
  // Retrains for the pending iteration; called by the training worker.
  void run_training();
  nlohmann::json status() const;
  nlohmann::json metrics() const;

  // Valid once the state is finished; the caller must not race training.
  const model::ErModel& model() const { return *model_; }
  std::vector<active::IterationLog> logs() const;
  const pipeline::PreparedDataset& dataset() const { return dataset_; }

 private:
  Session(std::string id, SessionRequest request, const SessionContext& context);
  static std::unique_ptr<Session> replay_events(const std::vector<nlohmann::json>& events,
                                                const std::filesystem::path& journal_path,
                                                const SessionContext& context);
  void initialize();
  void journal(const nlohmann::json& event);
  nlohmann::json selection_event_locked() const;
  // Computes the next selection or finishes; caller holds mu_.
  void prepare_iteration_locked();
  nlohmann::json pair_json(const std::string& pair_id, const std::string& bucket) const;
  nlohmann::json log_json(const active::IterationLog& log) const;

  std::string id_;
  SessionRequest request_;
  SessionContext context_;
  std::unique_ptr<Journal> journal_;
  pipeline::PreparedDataset dataset_;
  std::unique_ptr<model::ErModel> model_;
  std::unique_ptr<active::ActiveLearner> learner_;

  mutable std::mutex mu_;
  SessionState state_ = SessionState::kIdle;
  std::size_t iteration_ = 0;  // 1-based iteration being labeled or trained
  std::vector<std::pair<std::string, std::string>> pending_;  // (pair id, bucket)
  std::map<std::string, int> submitted_;
  nlohmann::json batch_ = nullptr;
  std::vector<active::IterationLog> logs_;
  std::optional<std::pair<std::size_t, std::size_t>> progress_;  // (epoch, epochs)
  std::optional<std::string> last_error_;
  bool replaying_ = false;
};

}  // namespace deeper::serve
