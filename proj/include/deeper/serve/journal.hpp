#pragma once

#include <filesystem>
#include <mutex>
#include <vector>

#include "json.hpp"

namespace deeper::serve {

// Append-only JSON-lines event log. Every append is flushed to disk with
// fsync before it returns.
class Journal {
 public:
  explicit Journal(std::filesystem::path path);
  ~Journal();
  Journal(const Journal&) = delete;
  Journal& operator=(const Journal&) = delete;

  const std::filesystem::path& path() const { return path_; }
  void append(const nlohmann::json& event);

  // Events in file order. An unterminated final line (a crash mid-write) is
  // dropped with a warning; a malformed complete line throws ParseError.
  // Opening a journal for append cuts such a torn line off.
  static std::vector<nlohmann::json> read(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  std::mutex mu_;
};

}  // namespace deeper::serve
