#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace deeper::text {

struct TokenizerConfig {
  bool lowercase = true;
  bool split_punctuation = true;
};

// Whitespace split, then leading and trailing ASCII punctuation characters
// are detached as single-character tokens. Internal punctuation is kept, so
// "object-relational" stays one token. Bytes >= 0x80 are passed through.
std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& cfg = {});

std::string to_lower_ascii(std::string_view s);

}  // namespace deeper::text
