#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace deeper::baselines {

using Tokens = std::vector<std::string>;

// Unit-cost edit distance over bytes.
std::size_t levenshtein(std::string_view a, std::string_view b);
// 1 - distance / max length; both empty gives 1.
double levenshtein_similarity(std::string_view a, std::string_view b);
// distance / max length; both empty gives 0.
double levenshtein_distance_normalized(std::string_view a, std::string_view b);

double jaro(std::string_view a, std::string_view b);
// Prefix scale 0.1 over at most 4 shared leading characters.
double jaro_winkler(std::string_view a, std::string_view b);

// Mean over tokens of `a` of the best Jaro-Winkler score against `b`.
double monge_elkan_directed(const Tokens& a, const Tokens& b);
// Mean of both directions; either side empty gives 0.
double monge_elkan(const Tokens& a, const Tokens& b);

// Cosine of token count vectors; either side empty gives 0.
double cosine_tokens(const Tokens& a, const Tokens& b);

}  // namespace deeper::baselines
