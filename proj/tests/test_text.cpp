#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "doctest.h"
#include "deeper/error.hpp"
#include "deeper/log.hpp"
#include "deeper/random.hpp"
#include "deeper/text/embedding.hpp"
#include "deeper/text/tokenizer.hpp"
#include "temp_dir.hpp"

using namespace deeper;
using namespace deeper::text;
using Tokens = std::vector<std::string>;

TEST_CASE("tokenize") {
  CHECK(tokenize("SIGMOD Conference") == Tokens{"sigmod", "conference"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("   \t ").empty());
  CHECK(tokenize("VLDB, 2000") == Tokens{"vldb", ",", "2000"});
  CHECK(tokenize("Object-Relational DBMS") == Tokens{"object-relational", "dbms"});
  CHECK(tokenize("(Extended Abstract).") == Tokens{"(", "extended", "abstract", ")", "."});
  CHECK(tokenize("O'Neil") == Tokens{"o'neil"});
  CHECK(tokenize("VLDB, 2000", {.lowercase = false, .split_punctuation = true}) ==
        Tokens{"VLDB", ",", "2000"});
  CHECK(tokenize("VLDB, 2000", {.lowercase = true, .split_punctuation = false}) ==
        Tokens{"vldb,", "2000"});
  CHECK(tokenize("Zürich") == Tokens{"zürich"});
}

TEST_CASE("tokenize is idempotent on its own output") {
  Rng rng(42);
  const std::string alphabet = "abcXYZ09 ,.;:-'()\"!? \t";
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    const auto len = rng.below(40);
    for (std::uint64_t i = 0; i < len; ++i) s += alphabet[rng.below(alphabet.size())];
    const auto once = tokenize(s);
    std::string joined;
    for (const auto& t : once) {
      CHECK_FALSE(t.empty());
      joined += t + " ";
    }
    CHECK(tokenize(joined) == once);
  }
}

TEST_CASE("load embeddings") {
  testing::TempDir dir;
  auto path = dir.write("vec.txt", "2 4\na 1 0 0 0\nb 0 1 0 0\n");
  auto store = EmbeddingStore::load(path);
  CHECK(store.vocab_size() == 2);
  CHECK(store.dim() == 4);
  auto a = store.embed_token("a");
  CHECK(a == std::vector<double>{1, 0, 0, 0});
  CHECK(store.embed_sequence(Tokens{"a"}) == std::vector<std::vector<double>>{{1, 0, 0, 0}});
  CHECK(store.embed_sequence(Tokens{}).empty());

  SUBCASE("no header") {
    auto p = dir.write("nohdr.txt", "x 0.5 -0.25\ny 1e-3 2\n");
    auto s = EmbeddingStore::load(p);
    CHECK(s.dim() == 2);
    CHECK(s.embed_token("y") == std::vector<double>{1e-3, 2});
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(EmbeddingStore::load(dir.path() / "missing.txt"), IoError);
  }
  SUBCASE("malformed value reports line") {
    auto p = dir.write("bad.txt", "2 2\na 1 0\nb 0 zz\n");
    try {
      EmbeddingStore::load(p);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
  }
  SUBCASE("inconsistent dimension") {
    auto p = dir.write("dim.txt", "a 1 0 0\nb 0 1\n");
    CHECK_THROWS_AS(EmbeddingStore::load(p), ParseError);
  }
  SUBCASE("duplicate token keeps the first row and warns") {
    std::vector<std::string> warnings;
    auto previous = set_warning_sink([&](std::string_view m) { warnings.emplace_back(m); });
    auto p = dir.write("dup.txt", "a 1 2\na 3 4\n");
    auto s = EmbeddingStore::load(p);
    set_warning_sink(previous);
    CHECK(s.vocab_size() == 1);
    CHECK(s.embed_token("a") == std::vector<double>{1, 2});
    CHECK(warnings.size() == 1);
  }
  SUBCASE("fingerprint follows file content") {
    auto p1 = dir.write("f1.txt", "a 1 2\n");
    auto p2 = dir.write("f2.txt", "a 1 3\n");
    auto p3 = dir.write("f3.txt", "a 1 2\n");
    CHECK(EmbeddingStore::load(p1).fingerprint() != EmbeddingStore::load(p2).fingerprint());
    CHECK(EmbeddingStore::load(p1).fingerprint() == EmbeddingStore::load(p3).fingerprint());
  }
}

TEST_CASE("load then embed preserves rows bit-exactly") {
  testing::TempDir dir;
  Rng rng(9);
  std::string content = "50 7\n";
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> row;
    content += "tok" + std::to_string(i);
    for (int j = 0; j < 7; ++j) {
      row.push_back(rng.uniform(-3, 3));
      char buf[40];
      std::snprintf(buf, sizeof buf, " %.17g", row.back());
      content += buf;
    }
    content += "\n";
    rows.push_back(row);
  }
  auto store = EmbeddingStore::load(dir.write("e.txt", content));
  Tokens tokens;
  for (int i = 0; i < 50; ++i) tokens.push_back("tok" + std::to_string(i));
  CHECK(store.embed_sequence(tokens) == rows);
}

TEST_CASE("out-of-vocabulary vectors") {
  auto store = EmbeddingStore::hashed_only(16);
  const auto v1 = store.embed_token("sigmod");
  CHECK(v1 == store.embed_token("sigmod"));
  CHECK(v1.size() == 16);

  SUBCASE("bucket sets of tokens sharing no n-gram are disjoint and vectors differ") {
    // "<ab>" has the 3-grams <ab, ab> and the 4-gram <ab>; "<xy>" has <xy, xy>, <xy>.
    auto b1 = store.ngram_buckets("ab");
    auto b2 = store.ngram_buckets("xy");
    CHECK(b1.size() == 3);
    CHECK(b2.size() == 3);
    const std::set<std::uint64_t> s1(b1.begin(), b1.end());
    for (auto b : b2) CHECK(s1.count(b) == 0);
    CHECK(store.embed_token("ab") != store.embed_token("xy"));
  }
  SUBCASE("n-gram counts follow the padded length") {
    // "<sigmod>" has length 8: 6 + 5 + 4 + 3 grams for n = 3..6.
    CHECK(store.ngram_buckets("sigmod").size() == 18);
  }
  SUBCASE("bounded, finite coordinates") {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
      std::string tok;
      const auto len = 1 + rng.below(12);
      for (std::uint64_t i = 0; i < len; ++i) tok += static_cast<char>('a' + rng.below(26));
      for (double x : store.embed_token(tok)) {
        CHECK(std::isfinite(x));
        CHECK(std::fabs(x) <= 0.05);
      }
    }
  }
  SUBCASE("a different seed changes OOV vectors") {
    NgramHashConfig other;
    other.seed = 99;
    CHECK(EmbeddingStore::hashed_only(16, other).embed_token("sigmod") != v1);
  }
}
