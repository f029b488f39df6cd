#include "deeper/schema.hpp"

#include <set>

#include "deeper/error.hpp"

namespace deeper {

Schema::Schema(std::vector<std::string> attributes) : attributes_(std::move(attributes)) {
  std::set<std::string> seen;
  for (const auto& a : attributes_) {
    if (a.empty()) throw ConfigError("schema attribute names must be non-empty");
    if (!seen.insert(a).second) throw ConfigError("duplicate schema attribute '" + a + "'");
  }
}

std::optional<std::size_t> Schema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < attributes_.size(); ++i) {
    if (attributes_[i] == name) return i;
  }
  return std::nullopt;
}

}  // namespace deeper
