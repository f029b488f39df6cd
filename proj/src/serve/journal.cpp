#include "deeper/serve/journal.hpp"

#include <cerrno>
#include <cstring>

#include <fcntl.h>
#include <unistd.h>

#include "deeper/data/csv.hpp"
#include "deeper/error.hpp"
#include "deeper/log.hpp"

namespace deeper::serve {

using nlohmann::json;

Journal::Journal(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  // Cut a torn final line so the next event starts on a fresh line.
  if (std::filesystem::exists(path_)) {
    const std::string text = data::read_file(path_);
    if (!text.empty() && text.back() != '\n') {
      const auto keep = text.rfind('\n');
      std::filesystem::resize_file(path_, keep == std::string::npos ? 0 : keep + 1);
    }
  }
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) {
    throw IoError("cannot open journal " + path_.string() + ": " + std::strerror(errno));
  }
}

Journal::~Journal() {
  if (fd_ >= 0) ::close(fd_);
}

void Journal::append(const json& event) {
  const std::string line = event.dump() + "\n";
  std::lock_guard lock(mu_);
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError("cannot write journal " + path_.string() + ": " + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) {
    throw IoError("cannot sync journal " + path_.string() + ": " + std::strerror(errno));
  }
}

std::vector<json> Journal::read(const std::filesystem::path& path) {
  const std::string text = data::read_file(path);
  std::vector<json> events;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < text.size()) {
    const std::size_t end = text.find('\n', start);
    ++line_no;
    // Every event is written with its newline, so an unterminated tail is torn.
    if (end == std::string::npos) {
      warn(path.string() + ": dropping torn final journal line " + std::to_string(line_no));
      break;
    }
    const std::string line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    try {
      events.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return events;
}

}  // namespace deeper::serve
