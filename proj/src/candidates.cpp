#include "deeper/data/candidates.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include "deeper/data/csv.hpp"
#include "deeper/error.hpp"
#include "deeper/log.hpp"
#include "deeper/random.hpp"
#include "deeper/text/tokenizer.hpp"

namespace deeper::data {

using nlohmann::json;

bool CandidateSet::labeled() const {
  std::size_t with = 0;
  for (const auto& p : pairs) with += p.label.has_value();
  if (with != 0 && with != pairs.size()) {
    throw ConfigError("candidate set labels " + std::to_string(with) + " of " +
                      std::to_string(pairs.size()) + " pairs; labels must cover all or none");
  }
  return !pairs.empty() && with == pairs.size();
}

std::set<std::string> qgrams(std::string_view s, std::size_t q) {
  if (q == 0) throw ConfigError("q-gram length must be >= 1");
  const std::string lower = text::to_lower_ascii(s);
  std::set<std::string> grams;
  if (lower.empty()) return grams;
  if (lower.size() < q) {
    grams.insert(lower);
    return grams;
  }
  for (std::size_t i = 0; i + q <= lower.size(); ++i) grams.insert(lower.substr(i, q));
  return grams;
}

namespace {

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  std::size_t shared = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++shared;
      ++i;
      ++j;
    }
  }
  return static_cast<double>(shared) / static_cast<double>(a.size() + b.size() - shared);
}

std::set<std::string> token_set(std::string_view s) {
  auto tokens = text::tokenize(s);
  return {tokens.begin(), tokens.end()};
}

std::size_t shared_count(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t n = 0;
  for (const auto& t : a) n += b.count(t);
  return n;
}

std::size_t attribute_index(const EntityTable& table, const BlockingRule& rule) {
  auto idx = table.schema().index_of(rule_attribute(rule));
  if (!idx) {
    throw ConfigError("blocking rule references unknown attribute '" + rule_attribute(rule) + "'");
  }
  return *idx;
}

// Per-record precomputed keys for one rule.
struct RuleKeys {
  std::vector<std::string> exact;
  std::vector<std::set<std::string>> sets;
};

RuleKeys precompute(const std::vector<const Record*>& records, std::size_t attr,
                    const BlockingRule& rule) {
  RuleKeys keys;
  for (const Record* r : records) {
    const std::string& v = r->values[attr];
    if (std::holds_alternative<EqualityRule>(rule)) {
      keys.exact.push_back(text::to_lower_ascii(v));
    } else if (auto* q = std::get_if<QgramJaccardRule>(&rule)) {
      keys.sets.push_back(qgrams(v, q->q));
    } else {
      keys.sets.push_back(token_set(v));
    }
  }
  return keys;
}

bool rule_passes(const BlockingRule& rule, const RuleKeys& l, const RuleKeys& r, std::size_t i,
                 std::size_t j) {
  if (std::holds_alternative<EqualityRule>(rule)) return l.exact[i] == r.exact[j];
  if (auto* q = std::get_if<QgramJaccardRule>(&rule)) {
    return jaccard(l.sets[i], r.sets[j]) >= q->threshold;
  }
  return shared_count(l.sets[i], r.sets[j]) >= std::get<TokenOverlapRule>(rule).min_shared;
}

std::vector<const Record*> sorted_records(const EntityTable& t) {
  std::vector<const Record*> out;
  for (const auto& r : t.records()) out.push_back(&r);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->id < b->id; });
  return out;
}

}  // namespace

double qgram_jaccard(std::string_view a, std::string_view b, std::size_t q) {
  return jaccard(qgrams(a, q), qgrams(b, q));
}

void validate_rule(const BlockingRule& rule) {
  if (auto* q = std::get_if<QgramJaccardRule>(&rule)) {
    if (q->q < 1) throw ConfigError("q-gram rule needs q >= 1");
    if (!(q->threshold > 0.0 && q->threshold <= 1.0)) {
      throw ConfigError("q-gram rule threshold must be in (0, 1], got " +
                        std::to_string(q->threshold));
    }
  } else if (auto* t = std::get_if<TokenOverlapRule>(&rule)) {
    if (t->min_shared < 1) throw ConfigError("token-overlap rule needs n >= 1");
  }
}

const std::string& rule_attribute(const BlockingRule& rule) {
  return std::visit([](const auto& r) -> const std::string& { return r.attribute; }, rule);
}

json rule_to_json(const BlockingRule& rule) {
  if (auto* e = std::get_if<EqualityRule>(&rule)) {
    return {{"kind", "equality"}, {"attribute", e->attribute}};
  }
  if (auto* q = std::get_if<QgramJaccardRule>(&rule)) {
    return {{"kind", "qgram_jaccard"},
            {"attribute", q->attribute},
            {"q", q->q},
            {"threshold", q->threshold}};
  }
  const auto& t = std::get<TokenOverlapRule>(rule);
  return {{"kind", "token_overlap"}, {"attribute", t.attribute}, {"min_shared", t.min_shared}};
}

BlockingRule rule_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.contains("attribute")) {
    throw ConfigError("blocking rule needs \"kind\" and \"attribute\": " + j.dump());
  }
  const std::string kind = j.at("kind").get<std::string>();
  const std::string attribute = j.at("attribute").get<std::string>();
  auto check_keys = [&](std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : j.items()) {
      bool ok = key == "kind" || key == "attribute";
      for (const char* a : allowed) ok = ok || key == a;
      if (!ok) throw ConfigError("unknown key '" + key + "' in " + kind + " rule");
    }
  };
  BlockingRule rule;
  try {
    if (kind == "equality") {
      check_keys({});
      rule = EqualityRule{attribute};
    } else if (kind == "qgram_jaccard") {
      check_keys({"q", "threshold"});
      QgramJaccardRule q{attribute};
      q.q = j.value("q", std::size_t{3});
      q.threshold = j.at("threshold").get<double>();
      rule = q;
    } else if (kind == "token_overlap") {
      check_keys({"min_shared"});
      rule = TokenOverlapRule{attribute, j.value("min_shared", std::size_t{1})};
    } else {
      throw ConfigError("unknown blocking rule kind '" + kind + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad blocking rule: ") + e.what());
  }
  validate_rule(rule);
  return rule;
}

bool passes_rules(const EntityTable& left, const Record& a, const Record& b,
                  const std::vector<BlockingRule>& rules) {
  for (const auto& rule : rules) {
    const std::size_t attr = attribute_index(left, rule);
    const std::string& x = a.values[attr];
    const std::string& y = b.values[attr];
    bool ok = false;
    if (std::holds_alternative<EqualityRule>(rule)) {
      ok = text::to_lower_ascii(x) == text::to_lower_ascii(y);
    } else if (auto* q = std::get_if<QgramJaccardRule>(&rule)) {
      ok = qgram_jaccard(x, y, q->q) >= q->threshold;
    } else {
      ok = shared_count(token_set(x), token_set(y)) >=
           std::get<TokenOverlapRule>(rule).min_shared;
    }
    if (!ok) return false;
  }
  return true;
}

CandidateSet block(const EntityTable& left, const EntityTable& right,
                   const std::vector<BlockingRule>& rules, const BlockOptions& options,
                   const MatchSet* gold) {
  if (!(left.schema() == right.schema())) {
    throw ConfigError("tables '" + left.table_id() + "' and '" + right.table_id() +
                      "' have different schemas");
  }
  std::vector<std::size_t> attrs;
  for (const auto& rule : rules) {
    validate_rule(rule);
    attrs.push_back(attribute_index(left, rule));
  }
  const std::size_t product = left.size() * right.size();
  if (rules.empty() && product > options.max_pairs && !options.allow_large) {
    throw ConfigError("Cartesian product of " + std::to_string(product) + " pairs exceeds " +
                      std::to_string(options.max_pairs) + "; add blocking rules or override");
  }

  const auto lrecs = sorted_records(left);
  const auto rrecs = sorted_records(right);
  std::vector<RuleKeys> lkeys, rkeys;
  for (std::size_t k = 0; k < rules.size(); ++k) {
    lkeys.push_back(precompute(lrecs, attrs[k], rules[k]));
    rkeys.push_back(precompute(rrecs, attrs[k], rules[k]));
  }

  // Each left record owns one output slot; slots are concatenated in order.
  std::vector<std::vector<std::size_t>> kept(lrecs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> total{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < lrecs.size(); i = next++) {
      for (std::size_t j = 0; j < rrecs.size(); ++j) {
        bool ok = true;
        for (std::size_t k = 0; k < rules.size() && ok; ++k) {
          ok = rule_passes(rules[k], lkeys[k], rkeys[k], i, j);
        }
        if (ok) kept[i].push_back(j);
      }
      total += kept[i].size();
    }
  };
  std::size_t threads = options.threads ? options.threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, lrecs.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  if (total > options.max_pairs && !options.allow_large) {
    throw ConfigError("blocking kept " + std::to_string(total.load()) + " pairs, more than " +
                      std::to_string(options.max_pairs) + "; tighten the rules or override");
  }
  CandidateSet out;
  out.pairs.reserve(total);
  for (std::size_t i = 0; i < lrecs.size(); ++i) {
    for (std::size_t j : kept[i]) {
      CandidatePair p{lrecs[i]->id, rrecs[j]->id, std::nullopt};
      if (gold) p.label = gold->count({p.left, p.right}) ? 1 : 0;
      out.pairs.push_back(std::move(p));
    }
  }
  json rule_list = json::array();
  for (const auto& r : rules) rule_list.push_back(rule_to_json(r));
  out.provenance = {{"left_table", left.table_id()},
                    {"right_table", right.table_id()},
                    {"rules", rule_list}};
  if (gold) {
    std::size_t unresolved = 0, lost = 0;
    std::size_t kept_matches = 0;
    for (const auto& p : out.pairs) kept_matches += *p.label;
    for (const auto& [l, r] : *gold) {
      if (!left.find(l) || !right.find(r)) ++unresolved;
    }
    lost = gold->size() - unresolved - kept_matches;
    if (unresolved) {
      warn(std::to_string(unresolved) + " gold match(es) refer to unknown record ids; ignored");
    }
    out.provenance["gold_matches"] = gold->size() - unresolved;
    out.provenance["matches_lost_by_blocking"] = lost;
  }
  return out;
}

Split split(const CandidateSet& candidates, std::uint64_t seed) {
  const std::size_t n = candidates.size();
  if (n < 5) {
    throw ConfigError("cannot split " + std::to_string(n) + " pairs 3:1:1 (need at least 5)");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  const std::size_t fifth = n / 5;
  const std::size_t train_end = n - 2 * fifth;
  const std::size_t dev_end = n - fifth;
  Split s;
  for (CandidateSet* part : {&s.train, &s.dev, &s.test}) part->provenance = candidates.provenance;
  for (std::size_t i = 0; i < n; ++i) {
    CandidateSet& dst = i < train_end ? s.train : (i < dev_end ? s.dev : s.test);
    dst.pairs.push_back(candidates.pairs[order[i]]);
  }
  s.manifest = {{"seed", seed},
                {"total", n},
                {"cuts", {train_end, dev_end}},
                {"sizes", {{"train", s.train.size()}, {"dev", s.dev.size()}, {"test", s.test.size()}}}};
  for (auto [part, name] : {std::pair{&s.train, "train"}, {&s.dev, "dev"}, {&s.test, "test"}}) {
    part->provenance["split"] = name;
    part->provenance["split_seed"] = seed;
  }
  return s;
}

json CandidateStats::to_json() const {
  json j = {{"pairs", pairs}, {"attributes", attributes}};
  j["matches"] = matches ? json(*matches) : json(nullptr);
  return j;
}

CandidateStats stats(const CandidateSet& candidates, std::size_t attributes) {
  CandidateStats s;
  s.pairs = candidates.size();
  s.attributes = attributes;
  if (candidates.empty()) {
    s.matches = 0;
  } else if (candidates.labeled()) {
    std::size_t m = 0;
    for (const auto& p : candidates.pairs) m += *p.label == 1;
    s.matches = m;
  }
  return s;
}

MatchSet read_matches(const std::filesystem::path& path) {
  auto rows = read_csv(path);
  if (rows.empty() || rows[0].size() < 2) {
    throw ParseError(path.string() + ": missing header left_id,right_id");
  }
  MatchSet out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() == 1 && rows[r][0].empty()) continue;
    if (rows[r].size() != rows[0].size()) {
      throw ParseError(path.string() + ": row " + std::to_string(r + 1) + ": expected " +
                       std::to_string(rows[0].size()) + " fields");
    }
    out.emplace(rows[r][0], rows[r][1]);
  }
  return out;
}

void write_matches(const MatchSet& matches, const std::filesystem::path& path) {
  std::vector<CsvRow> rows{{"left_id", "right_id"}};
  for (const auto& [l, r] : matches) rows.push_back({l, r});
  write_csv(path, rows);
}

CandidateSet read_candidates(const std::filesystem::path& path) {
  auto rows = read_csv(path);
  if (rows.empty() || rows[0].size() < 2) {
    throw ParseError(path.string() + ": missing header left_id,right_id[,label]");
  }
  const bool has_label = rows[0].size() >= 3;
  CandidateSet out;
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = path.string() + ": row " + std::to_string(r + 1);
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != rows[0].size()) {
      throw ParseError(where + ": expected " + std::to_string(rows[0].size()) + " fields");
    }
    CandidatePair p{row[0], row[1], std::nullopt};
    if (has_label && !row[2].empty()) {
      if (row[2] == "1") {
        p.label = 1;
      } else if (row[2] == "0") {
        p.label = 0;
      } else {
        throw ParseError(where + ": label must be 0, 1 or empty, got '" + row[2] + "'");
      }
    }
    if (!seen.emplace(p.left, p.right).second) {
      throw ParseError(where + ": duplicate pair (" + p.left + ", " + p.right + ")");
    }
    out.pairs.push_back(std::move(p));
  }
  try {
    out.labeled();
  } catch (const ConfigError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  out.provenance = {{"source", path.string()}};
  return out;
}

void write_candidates(const CandidateSet& candidates, const std::filesystem::path& path) {
  std::vector<CsvRow> rows{{"left_id", "right_id", "label"}};
  for (const auto& p : candidates.pairs) {
    rows.push_back({p.left, p.right, p.label ? std::to_string(*p.label) : std::string()});
  }
  write_csv(path, rows);
}

void validate_candidates(const CandidateSet& candidates, const EntityTable& left,
                         const EntityTable& right) {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& p : candidates.pairs) {
    if (!left.find(p.left)) {
      throw ConfigError("candidate refers to unknown left id '" + p.left + "'");
    }
    if (!right.find(p.right)) {
      throw ConfigError("candidate refers to unknown right id '" + p.right + "'");
    }
    if (!seen.emplace(p.left, p.right).second) {
      throw ConfigError("duplicate candidate pair (" + p.left + ", " + p.right + ")");
    }
  }
  candidates.labeled();
}

}  // namespace deeper::data
