#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "deeper/data/candidates.hpp"
#include "deeper/data/table.hpp"

namespace deeper::baselines {

inline constexpr std::size_t kFeaturesPerAttribute = 6;
inline constexpr std::array<const char*, kFeaturesPerAttribute> kFeatureFunctions = {
    "qgram_jaccard", "cosine", "levenshtein_distance", "levenshtein_similarity", "monge_elkan",
    "exact"};

// Six similarities of two raw attribute values, in kFeatureFunctions order.
// Values are lowercased; token features use the default tokenizer.
std::array<double, kFeaturesPerAttribute> attribute_features(const std::string& a,
                                                             const std::string& b);
// Attribute-major concatenation over the schema.
std::vector<double> extract_features(const std::vector<std::string>& left,
                                     const std::vector<std::string>& right);
// "attr.func" for every feature position.
std::vector<std::string> feature_names(const Schema& schema);

struct FeatureMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;  // empty when the candidates are unlabeled
};

FeatureMatrix extract_features(const data::CandidateSet& candidates, const data::EntityTable& left,
                               const data::EntityTable& right, std::size_t threads = 0);
// Columns left_id,right_id,<feature names>,label.
void write_feature_csv(const FeatureMatrix& features, const data::CandidateSet& candidates,
                       const std::filesystem::path& path);

}  // namespace deeper::baselines
