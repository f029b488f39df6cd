#include "deeper/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace deeper {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

WarningSink& sink() {
  static WarningSink s;
  return s;
}

std::atomic<bool> g_info_enabled{false};

}  // namespace

WarningSink set_warning_sink(WarningSink s) {
  std::lock_guard lock(sink_mutex());
  auto previous = std::move(sink());
  sink() = std::move(s);
  return previous;
}

void warn(std::string_view message) {
  std::lock_guard lock(sink_mutex());
  if (sink()) {
    sink()(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

void set_info_enabled(bool enabled) { g_info_enabled = enabled; }

void info(std::string_view message) {
  if (g_info_enabled) {
    std::lock_guard lock(sink_mutex());
    std::cerr << message << '\n';
  }
}

}  // namespace deeper
