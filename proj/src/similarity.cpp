#include "deeper/baselines/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace deeper::baselines {

std::size_t levenshtein(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diagonal = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diagonal + (a[i - 1] != b[j - 1])});
      diagonal = up;
    }
  }
  return row[b.size()];
}

double levenshtein_distance_normalized(std::string_view a, std::string_view b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 0.0;
  return static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

double levenshtein_similarity(std::string_view a, std::string_view b) {
  return 1.0 - levenshtein_distance_normalized(a, b);
}

double jaro(std::string_view a, std::string_view b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  const std::size_t window = std::max(a.size(), b.size()) / 2;
  const std::size_t reach = window > 0 ? window - 1 : 0;
  std::vector<bool> a_hit(a.size()), b_hit(b.size());
  std::size_t matches = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::size_t lo = i > reach ? i - reach : 0;
    const std::size_t hi = std::min(b.size(), i + reach + 1);
    for (std::size_t j = lo; j < hi; ++j) {
      if (!b_hit[j] && a[i] == b[j]) {
        a_hit[i] = b_hit[j] = true;
        ++matches;
        break;
      }
    }
  }
  if (matches == 0) return 0.0;
  std::size_t transpositions = 0;
  for (std::size_t i = 0, j = 0; i < a.size(); ++i) {
    if (!a_hit[i]) continue;
    while (!b_hit[j]) ++j;
    transpositions += a[i] != b[j];
    ++j;
  }
  const double m = static_cast<double>(matches);
  return (m / static_cast<double>(a.size()) + m / static_cast<double>(b.size()) +
          (m - static_cast<double>(transpositions) / 2.0) / m) /
         3.0;
}

double jaro_winkler(std::string_view a, std::string_view b) {
  const double j = jaro(a, b);
  std::size_t prefix = 0;
  while (prefix < 4 && prefix < a.size() && prefix < b.size() && a[prefix] == b[prefix]) ++prefix;
  return j + static_cast<double>(prefix) * 0.1 * (1.0 - j);
}

double monge_elkan_directed(const Tokens& a, const Tokens& b) {
  if (a.empty() || b.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : a) {
    double best = 0.0;
    for (const auto& t : b) best = std::max(best, jaro_winkler(s, t));
    total += best;
  }
  return total / static_cast<double>(a.size());
}

double monge_elkan(const Tokens& a, const Tokens& b) {
  return 0.5 * (monge_elkan_directed(a, b) + monge_elkan_directed(b, a));
}

double cosine_tokens(const Tokens& a, const Tokens& b) {
  if (a.empty() || b.empty()) return 0.0;
  std::map<std::string_view, std::pair<double, double>> counts;
  for (const auto& t : a) counts[t].first += 1.0;
  for (const auto& t : b) counts[t].second += 1.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [token, c] : counts) {
    dot += c.first * c.second;
    na += c.first * c.first;
    nb += c.second * c.second;
  }
  return std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
}

}  // namespace deeper::baselines
