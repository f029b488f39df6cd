#pragma once

#include <optional>
#include <string>
#include <vector>

namespace deeper {

// Ordered attribute names shared by both tables of a scenario.
class Schema {
 public:
  Schema() = default;
  // Throws ConfigError on empty or duplicate names.
  explicit Schema(std::vector<std::string> attributes);

  std::size_t size() const { return attributes_.size(); }
  bool empty() const { return attributes_.empty(); }
  const std::string& operator[](std::size_t i) const { return attributes_[i]; }
  const std::vector<std::string>& attributes() const { return attributes_; }
  std::optional<std::size_t> index_of(const std::string& name) const;

  friend bool operator==(const Schema&, const Schema&) = default;

 private:
  std::vector<std::string> attributes_;
};

}  // namespace deeper
