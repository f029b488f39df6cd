#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "deeper/baselines/features.hpp"
#include "deeper/baselines/learners.hpp"
#include "deeper/baselines/similarity.hpp"
#include "deeper/data/csv.hpp"
#include "deeper/error.hpp"
#include "deeper/log.hpp"
#include "deeper/random.hpp"
#include "temp_dir.hpp"

using namespace deeper;
using namespace deeper::baselines;

namespace {

// Full (m+1)x(n+1) table, independent of the rolling-row implementation.
std::size_t dp_levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, sub});
    }
  }
  return d[a.size()][b.size()];
}

std::string random_string(Rng& rng, std::size_t max_len, std::size_t alphabet = 5) {
  std::string s;
  const auto len = rng.below(max_len + 1);
  for (std::uint64_t i = 0; i < len; ++i) s += static_cast<char>('a' + rng.below(alphabet));
  return s;
}

Tokens random_tokens(Rng& rng) {
  Tokens t;
  const auto n = rng.below(5);
  for (std::uint64_t i = 0; i < n; ++i) t.push_back(random_string(rng, 5, 3) + "x");
  return t;
}

}  // namespace

TEST_CASE("levenshtein") {
  CHECK(levenshtein("kitten", "sitting") == 3);
  CHECK(levenshtein("sigmod", "sigmod") == 0);
  CHECK(levenshtein("", "abc") == 3);
  CHECK(levenshtein("abc", "") == 3);
  CHECK(levenshtein_similarity("kitten", "sitting") == doctest::Approx(1.0 - 3.0 / 7.0));
  CHECK(levenshtein_similarity("abc", "abc") == 1.0);
  CHECK(levenshtein_similarity("abc", "xyz") == 0.0);
  CHECK(levenshtein_similarity("", "") == 1.0);
  CHECK(levenshtein_distance_normalized("", "") == 0.0);

  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const auto a = random_string(rng, 12);
    const auto b = random_string(rng, 12);
    const auto c = random_string(rng, 12);
    CHECK(levenshtein(a, b) == dp_levenshtein(a, b));
    CHECK(levenshtein(a, b) == levenshtein(b, a));
    CHECK(levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c));
  }
}

TEST_CASE("jaro-winkler reference values") {
  CHECK(jaro("martha", "marhta") == doctest::Approx(0.944444).epsilon(1e-5));
  CHECK(jaro_winkler("martha", "marhta") == doctest::Approx(0.961111).epsilon(1e-5));
  CHECK(jaro_winkler("dwayne", "duane") == doctest::Approx(0.84).epsilon(1e-5));
  CHECK(jaro_winkler("dixon", "dicksonx") == doctest::Approx(0.813333).epsilon(1e-5));
  CHECK(jaro_winkler("abc", "abc") == 1.0);
  CHECK(jaro_winkler("abc", "xyz") == 0.0);
}

TEST_CASE("monge-elkan and cosine") {
  CHECK(monge_elkan({"a", "b"}, {"a", "b"}) == 1.0);
  CHECK(monge_elkan_directed({"ab"}, {"ab", "xy"}) == 1.0);
  CHECK(monge_elkan({}, {"a"}) == 0.0);
  CHECK(monge_elkan({}, {}) == 0.0);
  CHECK(cosine_tokens({"a", "b"}, {"a", "b"}) == doctest::Approx(1.0));
  CHECK(cosine_tokens({"a"}, {"b"}) == 0.0);
  CHECK(cosine_tokens({"a", "b"}, {"a", "c"}) == doctest::Approx(0.5));
  CHECK(cosine_tokens({}, {}) == 0.0);

  Rng rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = random_tokens(rng);
    const auto b = random_tokens(rng);
    CHECK(monge_elkan(a, b) ==
          doctest::Approx(0.5 * (monge_elkan_directed(a, b) + monge_elkan_directed(b, a))));
    CHECK(monge_elkan(a, b) == monge_elkan(b, a));
    CHECK(cosine_tokens(a, b) == cosine_tokens(b, a));
    const auto s = random_string(rng, 8);
    const auto t = random_string(rng, 8);
    CHECK(jaro_winkler(s, t) == doctest::Approx(jaro_winkler(t, s)).epsilon(1e-15));
  }
}

TEST_CASE("feature extraction") {
  const std::vector<std::string> rec{"deep er", "smith", "", "2018"};
  auto f = extract_features(rec, rec);
  CHECK(f.size() == 24);
  // Identical non-empty value.
  CHECK(std::vector<double>(f.begin(), f.begin() + 6) == std::vector<double>{1, 1, 0, 1, 1, 1});
  // NULL vs NULL.
  CHECK(std::vector<double>(f.begin() + 12, f.begin() + 18) ==
        std::vector<double>{1, 0, 0, 1, 0, 1});
  CHECK_THROWS_AS(extract_features(rec, {"x"}), ShapeError);

  CHECK(feature_names(Schema({"title", "year"}))[7] == "year.cosine");
  CHECK(feature_names(Schema({"title", "year"})).size() == 12);

  Rng rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> a, b;
    for (int k = 0; k < 3; ++k) {
      a.push_back(random_string(rng, 6) + " " + random_string(rng, 6));
      b.push_back(rng.bernoulli(0.3) ? a.back() : random_string(rng, 6));
    }
    const auto fab = extract_features(a, b);
    const auto fba = extract_features(b, a);
    for (std::size_t i = 0; i < fab.size(); ++i) {
      CHECK(std::isfinite(fab[i]));
      CHECK(fab[i] >= 0.0);
      CHECK(fab[i] <= 1.0);
      CHECK(fab[i] == doctest::Approx(fba[i]).epsilon(1e-15));
      if (i % kFeaturesPerAttribute == 5) CHECK((fab[i] == 0.0 || fab[i] == 1.0));
    }
  }
}

TEST_CASE("feature matrix over a candidate set") {
  data::EntityTable A("A", Schema({"t", "y"}));
  A.add({"a1", {"x y", "1"}});
  data::EntityTable B("B", Schema({"t", "y"}));
  B.add({"b1", {"x y", "2"}});
  B.add({"b2", {"z", "1"}});
  data::CandidateSet cs;
  cs.pairs = {{"a1", "b1", 1}, {"a1", "b2", 0}};
  auto m = extract_features(cs, A, B, 2);
  CHECK(m.rows.size() == 2);
  CHECK(m.labels == std::vector<int>{1, 0});
  CHECK(m.rows[0][5] == 1.0);
  CHECK(m.rows[0][11] == 0.0);

  testing::TempDir dir;
  write_feature_csv(m, cs, dir.path() / "f.csv");
  auto rows = data::read_csv(dir.path() / "f.csv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0][2] == "t.qgram_jaccard");
  CHECK(rows[0].back() == "label");
  CHECK(std::stod(rows[2][2]) == m.rows[1][0]);
}

TEST_CASE("logistic regression") {
  LogRegParams zero;
  zero.weights = {0, 0, 0};
  CHECK(predict(zero, std::vector<double>{0.3, 0.9, 0.1}) == 0.5);

  // Separable: class 1 iff x0 exceeds x1 by a margin.
  Rng rng(12);
  FeatureRows x;
  std::vector<int> y;
  while (x.size() < 200) {
    const double a = rng.uniform01();
    const double b = rng.uniform01();
    if (std::fabs(a - b) < 0.2) continue;
    x.push_back({a, b});
    y.push_back(a > b ? 1 : 0);
  }
  std::vector<double> trace;
  auto p = train_logreg(x, y, {0.5, 500}, &trace);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double prob = predict(p, x[i]);
    CHECK(prob > 0.0);
    CHECK(prob < 1.0);
    correct += (prob >= 0.5) == (y[i] == 1);
  }
  CHECK(correct == x.size());
  for (std::size_t e = 1; e < trace.size(); ++e) CHECK(trace[e] <= trace[e - 1]);

  std::vector<std::string> warnings;
  auto previous = set_warning_sink([&](std::string_view m) { warnings.emplace_back(m); });
  train_logreg({{0.1}, {0.2}}, {1, 1}, {0.1, 5});
  set_warning_sink(previous);
  CHECK(warnings.size() == 1);
}

TEST_CASE("gaussian naive bayes") {
  const FeatureRows x{{0.0, 1.0}, {2.0, 1.0}, {4.0, 0.0}, {6.0, 2.0}};
  const std::vector<int> y{0, 0, 1, 1};
  auto p = train_gnb(x, y);
  CHECK(p.priors[0] == 0.5);
  CHECK(p.priors[1] == 0.5);
  CHECK(p.means[0] == std::vector<double>{1.0, 1.0});
  CHECK(p.means[1] == std::vector<double>{5.0, 1.0});
  CHECK(p.variances[0][0] == 1.0);
  CHECK(p.variances[0][1] == kGnbVarianceFloor);  // constant feature within the class
  CHECK(p.variances[1] == std::vector<double>{1.0, 1.0});
  // Off the floored class-0 mean of feature 1, class 1 wins.
  CHECK(predict(p, std::vector<double>{5.0, 0.5}) > 0.5);
  CHECK(predict(p, std::vector<double>{1.0, 1.0}) < 0.5);
  for (const auto& row : x) {
    const double prob = predict(p, row);
    CHECK(prob >= 0.0);
    CHECK(prob <= 1.0);
  }
  CHECK_THROWS_AS(train_gnb({{1.0}, {2.0}}, {1, 1}), ConfigError);
}
