#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "deeper/serve/session.hpp"
#include "json.hpp"

namespace deeper::serve {

struct ServerOptions {
  std::filesystem::path data_root = ".";
  std::filesystem::path journal_dir = "journal";
  std::string token;  // empty disables authentication
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::size_t threads = 0;
};

// HTTP front end for active-learning sessions. Journals found under
// journal_dir are replayed on construction. A single worker thread runs
// every training job, one at a time, in the order they were requested.
class Server {
 public:
  explicit Server(ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds the listening socket and returns the bound port.
  int bind();
  // Serves until stop(); binds first if needed.
  void run();
  // bind() plus run() on a background thread.
  int start();
  void stop();

  const ServerOptions& options() const { return options_; }
  std::size_t recovered_sessions() const { return recovered_; }

  // The operations behind the endpoints, also used in-process by the CLI.
  std::shared_ptr<Session> create_session(const nlohmann::json& body);
  std::shared_ptr<Session> find(const std::string& id) const;
  nlohmann::json advance(const std::string& id);
  // Blocks until no training job of the session is queued or running.
  void wait_idle(const std::string& id);
  // Blocks until the session is finished.
  void wait_finished(const std::string& id);

 private:
  struct Http;
  void recover();
  void enqueue(std::shared_ptr<Session> session);
  void worker_loop();
  void install_routes();

  ServerOptions options_;
  std::unique_ptr<Http> http_;
  bool bound_ = false;
  int port_ = 0;
  std::thread listener_;
  std::size_t recovered_ = 0;

  mutable std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;

  std::mutex jobs_mu_;
  std::condition_variable jobs_cv_;
  std::condition_variable done_cv_;
  std::deque<std::shared_ptr<Session>> jobs_;
  std::string running_;  // id of the session being trained
  bool stopping_ = false;
  std::thread worker_;
};

}  // namespace deeper::serve
