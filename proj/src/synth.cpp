#include "deeper/data/synth.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <string_view>

#include "deeper/error.hpp"
#include "deeper/random.hpp"

namespace deeper::data {

namespace {

constexpr std::array<std::string_view, 120> kTitleWords = {
    "efficient", "query",      "processing",  "distributed", "database",    "systems",
    "adaptive",  "indexing",   "streams",     "mining",      "frequent",    "patterns",
    "scalable",  "join",       "algorithms",  "relational",  "optimization", "xml",
    "semantic",  "web",        "integration", "schema",      "matching",    "entity",
    "resolution", "record",    "linkage",     "duplicate",   "detection",   "cleaning",
    "incremental", "maintenance", "materialized", "views",   "transaction", "management",
    "concurrency", "control",  "recovery",    "logging",     "parallel",    "execution",
    "cost",      "models",     "selectivity", "estimation",  "histograms",  "sampling",
    "approximate", "answers",  "top-k",       "ranking",     "keyword",     "search",
    "graph",     "queries",    "spatial",     "temporal",    "similarity",  "joins",
    "clustering", "high-dimensional", "data", "nearest",     "neighbor",    "caching",
    "storage",   "compression", "column",     "stores",      "main-memory", "engines",
    "workload",  "tuning",     "privacy",     "preserving",  "publishing",  "provenance",
    "uncertain", "probabilistic", "inference", "learning",   "deep",        "neural",
    "networks",  "crowdsourcing", "quality",  "assessment",  "benchmark",   "evaluation",
    "peer-to-peer", "sensor",  "continuous",  "monitoring",  "federated",   "mediators",
    "wrappers",  "extraction", "information", "retrieval",   "text",        "documents",
    "versioning", "scientific", "workflows",  "lineage",     "multidimensional", "olap",
    "cubes",     "warehouse",  "aggregation", "skyline",     "preference",  "consistent",
    "repair",    "constraints", "dependencies", "discovery", "mapping",     "exchange"};

constexpr std::array<std::string_view, 40> kFirstNames = {
    "james",   "maria",  "wei",     "anna",   "rakesh", "jennifer", "michael", "yuki",
    "david",   "elena",  "hector",  "sunita", "peter",  "laura",    "jun",     "samuel",
    "fatima",  "ivan",   "chen",    "olga",   "george", "priya",    "thomas",  "ines",
    "rafael",  "nadia",  "alan",    "sofia",  "kenji",  "helen",    "omar",    "claire",
    "victor",  "mei",    "daniel",  "rosa",   "arjun",  "karen",    "felix",   "lina"};

constexpr std::array<std::string_view, 60> kSurnames = {
    "smith",    "garcia",   "zhang",    "mueller",  "agrawal",  "widom",    "stonebraker",
    "tanaka",   "dewitt",   "petrova",  "molina",   "sarawagi", "bernstein", "haas",
    "li",       "halevy",   "haddad",   "ivanov",   "chen",     "kuznetsova", "weikum",
    "ramakrishnan", "franklin", "santos", "rossi",  "naughton", "kossmann", "ioannidis",
    "chaudhuri", "ganti",   "doan",     "getoor",   "koudas",   "srivastava", "suciu",
    "dalvi",    "hellerstein", "madden", "abadi",   "kraska",   "neumann",  "leis",
    "boncz",    "idreos",   "ailamaki", "pavlo",    "jagadish", "gehrke",   "ozsu",
    "valduriez", "tan",     "ooi",      "lin",      "yu",       "han",      "pei",
    "kriegel",  "faloutsos", "papadias", "tao"};

struct Venue {
  std::string_view full;
  std::string_view acronym;
};
constexpr std::array<Venue, 12> kVenues = {{
    {"international conference on management of data", "sigmod"},
    {"very large data bases", "vldb"},
    {"international conference on data engineering", "icde"},
    {"acm transactions on database systems", "tods"},
    {"the vldb journal", "vldbj"},
    {"extending database technology", "edbt"},
    {"international conference on database theory", "icdt"},
    {"symposium on principles of database systems", "pods"},
    {"conference on information and knowledge management", "cikm"},
    {"knowledge discovery and data mining", "kdd"},
    {"ieee transactions on knowledge and data engineering", "tkde"},
    {"sigmod record", "sigmod rec"},
}};

struct Entity {
  std::vector<std::string> title;
  std::vector<std::pair<std::string, std::string>> authors;  // first, last
  std::size_t venue = 0;
  int year = 2000;
};

template <std::size_t N>
std::string pick(Rng& rng, const std::array<std::string_view, N>& pool) {
  return std::string(pool[rng.below(N)]);
}

Entity random_entity(Rng& rng) {
  Entity e;
  const std::size_t words = 4 + rng.below(5);
  for (std::size_t w = 0; w < words; ++w) e.title.push_back(pick(rng, kTitleWords));
  const std::size_t people = 1 + rng.below(4);
  for (std::size_t a = 0; a < people; ++a) {
    e.authors.emplace_back(pick(rng, kFirstNames), pick(rng, kSurnames));
  }
  e.venue = rng.below(kVenues.size());
  e.year = 1990 + static_cast<int>(rng.below(30));
  return e;
}

// Keeps most of `base`'s title, everything else fresh.
Entity near_duplicate(Rng& rng, const Entity& base) {
  Entity e = random_entity(rng);
  e.title = base.title;
  const std::size_t edits = 1 + rng.below(2);
  for (std::size_t k = 0; k < edits; ++k) {
    e.title[rng.below(e.title.size())] = pick(rng, kTitleWords);
  }
  if (rng.bernoulli(0.5)) e.venue = base.venue;
  if (rng.bernoulli(0.5)) e.year = base.year + static_cast<int>(rng.below(3)) - 1;
  return e;
}

std::string typo(Rng& rng, std::string token) {
  if (token.size() < 2) return token;
  const std::size_t pos = rng.below(token.size());
  const char letter = static_cast<char>('a' + rng.below(26));
  switch (rng.below(4)) {
    case 0:
      token[pos] = letter;
      break;
    case 1:
      token.erase(pos, 1);
      break;
    case 2:
      token.insert(token.begin() + static_cast<std::ptrdiff_t>(pos), letter);
      break;
    default:
      std::swap(token[pos], token[pos + 1 < token.size() ? pos + 1 : pos - 1]);
  }
  return token;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// Clean rendering goes to the left table, a perturbed one to the right.
std::string render(const Entity& e, const std::string& attribute, Rng* noise,
                   const PerturbationConfig& p) {
  auto maybe_typo = [&](std::string t) {
    return noise && noise->bernoulli(p.typo_rate) ? typo(*noise, std::move(t)) : t;
  };
  std::string value;
  if (attribute == "title") {
    std::vector<std::string> words;
    for (const auto& w : e.title) {
      if (noise && e.title.size() > 2 && noise->bernoulli(p.token_drop_rate)) continue;
      words.push_back(maybe_typo(w));
    }
    value = join(words, " ");
  } else if (attribute == "authors") {
    const bool initials = noise && noise->bernoulli(p.abbreviation_rate);
    std::vector<std::string> names;
    for (const auto& [first, last] : e.authors) {
      std::string f = initials ? first.substr(0, 1) + "." : maybe_typo(first);
      names.push_back(f + " " + maybe_typo(last));
    }
    value = join(names, ", ");
  } else if (attribute == "venue") {
    const Venue& v = kVenues[e.venue];
    value = noise && noise->bernoulli(p.abbreviation_rate) ? std::string(v.acronym)
                                                           : std::string(v.full);
  } else {
    value = std::to_string(e.year);
  }
  if (noise && noise->bernoulli(p.null_rate)) value.clear();
  return value;
}

std::string make_id(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%05zu", prefix, i);
  return buf;
}

}  // namespace

SynthCorpus synth_generate(const SynthConfig& config) {
  if (config.entities < 10) throw ConfigError("synthetic corpus needs at least 10 entities");
  for (const auto& a : config.attributes) {
    if (a != "title" && a != "authors" && a != "venue" && a != "year") {
      throw ConfigError("unknown synthetic attribute '" + a + "'");
    }
  }
  Rng rng(config.seed);
  std::vector<Entity> entities;
  for (std::size_t i = 0; i < config.entities; ++i) {
    if (i > 0 && rng.bernoulli(config.near_duplicate_rate)) {
      entities.push_back(near_duplicate(rng, entities[rng.below(i)]));
    } else {
      entities.push_back(random_entity(rng));
    }
  }

  // The right table lists entities in a shuffled order under its own ids.
  std::vector<std::size_t> order(config.entities);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(std::span<std::size_t>(order));

  Schema schema(config.attributes);
  SynthCorpus corpus{EntityTable(config.name + "_left", schema),
                     EntityTable(config.name + "_right", schema), {}};
  Rng noise(splitmix64(config.seed ^ 0x9E3779B97F4A7C15ULL));
  std::vector<std::string> right_id(config.entities);
  for (std::size_t slot = 0; slot < order.size(); ++slot) right_id[order[slot]] = make_id('b', slot);

  for (std::size_t i = 0; i < config.entities; ++i) {
    Record rec{make_id('a', i), {}};
    for (const auto& a : config.attributes) {
      rec.values.push_back(render(entities[i], a, nullptr, config.perturbation));
    }
    corpus.left.add(std::move(rec));
  }
  for (std::size_t slot = 0; slot < order.size(); ++slot) {
    const std::size_t i = order[slot];
    Record rec{right_id[i], {}};
    for (const auto& a : config.attributes) {
      rec.values.push_back(render(entities[i], a, &noise, config.perturbation));
    }
    corpus.right.add(std::move(rec));
    corpus.matches.emplace(make_id('a', i), right_id[i]);
  }
  return corpus;
}

std::vector<BlockingRule> synth_blocking_rules() {
  return {QgramJaccardRule{"title", 3, kSynthTitleThreshold}};
}

}  // namespace deeper::data
