#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace deeper::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

// Runs one command line (program name excluded) and returns its exit code:
// 0 on success, 2 for invalid flags or configuration, 1 for other failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace deeper::cli
