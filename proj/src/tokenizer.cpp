#include "deeper/text/tokenizer.hpp"

#include <cctype>

namespace deeper::text {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u) != 0;
}

}  // namespace

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x80) c = static_cast<char>(std::tolower(u));
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& cfg) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t end = i;
    while (end < text.size() && !is_space(text[end])) ++end;
    if (end == i) break;
    std::string_view word = text.substr(i, end - i);
    i = end;

    if (!cfg.split_punctuation) {
      tokens.emplace_back(cfg.lowercase ? to_lower_ascii(word) : std::string(word));
      continue;
    }
    std::size_t lo = 0;
    std::size_t hi = word.size();
    while (lo < hi && is_punct(word[lo])) ++lo;
    while (hi > lo && is_punct(word[hi - 1])) --hi;
    for (std::size_t p = 0; p < lo; ++p) tokens.emplace_back(1, word[p]);
    if (hi > lo) {
      auto core = word.substr(lo, hi - lo);
      tokens.emplace_back(cfg.lowercase ? to_lower_ascii(core) : std::string(core));
    }
    for (std::size_t p = hi; p < word.size(); ++p) tokens.emplace_back(1, word[p]);
  }
  return tokens;
}

}  // namespace deeper::text
