#include "deeper/baselines/features.hpp"

#include <atomic>
#include <cstdio>
#include <thread>

#include "deeper/baselines/similarity.hpp"
#include "deeper/data/csv.hpp"
#include "deeper/error.hpp"
#include "deeper/text/tokenizer.hpp"

namespace deeper::baselines {

std::array<double, kFeaturesPerAttribute> attribute_features(const std::string& a,
                                                             const std::string& b) {
  const std::string la = text::to_lower_ascii(a);
  const std::string lb = text::to_lower_ascii(b);
  const Tokens ta = text::tokenize(a);
  const Tokens tb = text::tokenize(b);
  return {data::qgram_jaccard(la, lb, 3),
          cosine_tokens(ta, tb),
          levenshtein_distance_normalized(la, lb),
          levenshtein_similarity(la, lb),
          monge_elkan(ta, tb),
          la == lb ? 1.0 : 0.0};
}

std::vector<double> extract_features(const std::vector<std::string>& left,
                                     const std::vector<std::string>& right) {
  if (left.size() != right.size()) {
    throw ShapeError("records have " + std::to_string(left.size()) + " and " +
                     std::to_string(right.size()) + " attributes");
  }
  std::vector<double> out;
  out.reserve(left.size() * kFeaturesPerAttribute);
  for (std::size_t i = 0; i < left.size(); ++i) {
    const auto f = attribute_features(left[i], right[i]);
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

std::vector<std::string> feature_names(const Schema& schema) {
  std::vector<std::string> names;
  for (const auto& a : schema.attributes()) {
    for (const char* f : kFeatureFunctions) names.push_back(a + "." + f);
  }
  return names;
}

FeatureMatrix extract_features(const data::CandidateSet& candidates, const data::EntityTable& left,
                               const data::EntityTable& right, std::size_t threads) {
  data::validate_candidates(candidates, left, right);
  FeatureMatrix m;
  m.names = feature_names(left.schema());
  m.rows.resize(candidates.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < candidates.size(); i = next++) {
      const auto& p = candidates.pairs[i];
      m.rows[i] = extract_features(left.at(p.left).values, right.at(p.right).values);
    }
  };
  std::size_t n = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (candidates.labeled()) {
    for (const auto& p : candidates.pairs) m.labels.push_back(*p.label);
  }
  return m;
}

void write_feature_csv(const FeatureMatrix& features, const data::CandidateSet& candidates,
                       const std::filesystem::path& path) {
  std::vector<data::CsvRow> rows;
  data::CsvRow header{"left_id", "right_id"};
  header.insert(header.end(), features.names.begin(), features.names.end());
  header.push_back("label");
  rows.push_back(std::move(header));
  char buf[32];
  for (std::size_t i = 0; i < features.rows.size(); ++i) {
    data::CsvRow row{candidates.pairs[i].left, candidates.pairs[i].right};
    for (double v : features.rows[i]) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      row.emplace_back(buf);
    }
    row.push_back(features.labels.empty() ? "" : std::to_string(features.labels[i]));
    rows.push_back(std::move(row));
  }
  data::write_csv(path, rows);
}

}  // namespace deeper::baselines
