#include "deeper/serve/server.hpp"

#include <random>

#include "httplib.h"

#include "deeper/log.hpp"

namespace deeper::serve {

namespace fs = std::filesystem;
using nlohmann::json;

struct Server::Http {
  httplib::Server server;
};

namespace {

std::string new_session_id() {
  std::random_device rd;
  std::uniform_int_distribution<int> hex(0, 15);
  std::string id;
  for (int i = 0; i < 32; ++i) id += "0123456789abcdef"[hex(rd)];
  return id;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message,
                const json& detail = nullptr) {
  send_json(res, status, {{"error", message}, {"status", status}, {"detail", detail}});
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("request body is not valid JSON: ") + e.what());
  }
}

// Runs a handler and maps library errors onto HTTP status codes.
template <typename F>
void guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const ApiError& e) {
    send_error(res, e.status(), e.what(), e.detail());
  } catch (const ConfigError& e) {
    send_error(res, 400, e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

}  // namespace

Server::Server(ServerOptions options)
    : options_(std::move(options)), http_(std::make_unique<Http>()) {
  fs::create_directories(options_.journal_dir);
  recover();
  worker_ = std::thread([this] { worker_loop(); });
  install_routes();
}

Server::~Server() {
  stop();
  {
    std::lock_guard lock(jobs_mu_);
    stopping_ = true;
  }
  jobs_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

void Server::recover() {
  SessionContext ctx{options_.data_root, options_.threads};
  std::vector<fs::path> journals;
  for (const auto& entry : fs::directory_iterator(options_.journal_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
      journals.push_back(entry.path());
    }
  }
  std::sort(journals.begin(), journals.end());
  for (const auto& path : journals) {
    try {
      std::shared_ptr<Session> s = Session::replay(path, ctx);
      const bool resume = s->state() == SessionState::kTraining;
      sessions_[s->id()] = s;
      ++recovered_;
      info("recovered session " + s->id() + " (" + to_string(s->state()) + ")");
      if (resume) enqueue(s);
    } catch (const std::exception& e) {
      warn("cannot recover session from " + path.string() + ": " + e.what());
    }
  }
}

std::shared_ptr<Session> Server::create_session(const json& body) {
  auto request = SessionRequest::from_json(body);
  std::string id = new_session_id();
  SessionContext ctx{options_.data_root, options_.threads};
  auto session = std::make_shared<Session>(id, std::move(request), ctx,
                                           options_.journal_dir / (id + ".jsonl"));
  std::lock_guard lock(sessions_mu_);
  sessions_[id] = session;
  return session;
}

std::shared_ptr<Session> Server::find(const std::string& id) const {
  std::lock_guard lock(sessions_mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ApiError(404, "unknown session '" + id + "'");
  return it->second;
}

json Server::advance(const std::string& id) {
  auto session = find(id);
  json out = session->begin_advance();
  enqueue(session);
  return out;
}

void Server::enqueue(std::shared_ptr<Session> session) {
  {
    std::lock_guard lock(jobs_mu_);
    jobs_.push_back(std::move(session));
  }
  jobs_cv_.notify_all();
}

void Server::worker_loop() {
  std::unique_lock lock(jobs_mu_);
  while (true) {
    jobs_cv_.wait(lock, [&] { return stopping_ || !jobs_.empty(); });
    if (stopping_) return;
    auto session = jobs_.front();
    jobs_.pop_front();
    running_ = session->id();
    lock.unlock();
    try {
      session->run_training();
    } catch (const std::exception& e) {
      warn("session " + session->id() + ": " + e.what());
    }
    lock.lock();
    running_.clear();
    done_cv_.notify_all();
  }
}

void Server::wait_idle(const std::string& id) {
  std::unique_lock lock(jobs_mu_);
  done_cv_.wait(lock, [&] {
    if (stopping_) return true;
    if (running_ == id) return false;
    return std::none_of(jobs_.begin(), jobs_.end(), [&](const auto& s) { return s->id() == id; });
  });
}

void Server::wait_finished(const std::string& id) {
  auto session = find(id);
  std::unique_lock lock(jobs_mu_);
  done_cv_.wait(lock, [&] { return stopping_ || session->state() == SessionState::kFinished; });
}

void Server::install_routes() {
  auto& svr = http_->server;
  svr.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (options_.token.empty()) return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value("Authorization") == "Bearer " + options_.token) {
      return httplib::Server::HandlerResponse::Unhandled;
    }
    send_error(res, 401, "missing or wrong bearer token");
    return httplib::Server::HandlerResponse::Handled;
  });
  svr.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto session = create_session(parse_body(req));
      send_json(res, 201, {{"session_id", session->id()}});
    });
  });
  svr.Get(R"(/sessions/([^/]+)/batch)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, find(req.matches[1])->batch()); });
  });
  svr.Post(R"(/sessions/([^/]+)/labels)",
           [this](const httplib::Request& req, httplib::Response& res) {
             guarded(res, [&] {
               auto session = find(req.matches[1]);
               send_json(res, 200, session->submit(parse_label_submission(parse_body(req))));
             });
           });
  svr.Post(R"(/sessions/([^/]+)/advance)",
           [this](const httplib::Request& req, httplib::Response& res) {
             guarded(res, [&] {
               if (!req.body.empty()) {
                 const json body = parse_body(req);
                 if (!body.is_object() || !body.empty()) {
                   throw ConfigError("advance takes no fields");
                 }
               }
               send_json(res, 202, advance(req.matches[1]));
             });
           });
  svr.Get(R"(/sessions/([^/]+)/status)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, find(req.matches[1])->status()); });
  });
  svr.Get(R"(/sessions/([^/]+)/metrics)",
          [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { send_json(res, 200, find(req.matches[1])->metrics()); });
          });
}

int Server::bind() {
  if (bound_) return port_;
  if (options_.port == 0) {
    port_ = http_->server.bind_to_any_port(options_.host);
    if (port_ < 0) throw IoError("cannot bind " + options_.host);
  } else {
    if (!http_->server.bind_to_port(options_.host, options_.port)) {
      throw IoError("cannot bind " + options_.host + ":" + std::to_string(options_.port));
    }
    port_ = options_.port;
  }
  bound_ = true;
  return port_;
}

void Server::run() {
  bind();
  http_->server.listen_after_bind();
}

int Server::start() {
  const int port = bind();
  listener_ = std::thread([this] { http_->server.listen_after_bind(); });
  http_->server.wait_until_ready();
  return port;
}

void Server::stop() {
  http_->server.stop();
  if (listener_.joinable()) listener_.join();
}

}  // namespace deeper::serve
