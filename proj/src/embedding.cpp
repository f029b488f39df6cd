#include "deeper/text/embedding.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "deeper/error.hpp"
#include "deeper/log.hpp"
#include "deeper/random.hpp"

namespace deeper::text {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t end = i;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t' && line[end] != '\r') ++end;
    if (end > i) fields.push_back(line.substr(i, end - i));
    i = end;
  }
  return fields;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

std::string fingerprint_hex(std::uint64_t fingerprint) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fingerprint));
  return buf;
}

EmbeddingStore EmbeddingStore::load(const std::filesystem::path& path, NgramHashConfig hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string content = buffer.str();

  EmbeddingStore store;
  store.hash_ = hash;
  store.fingerprint_ = fnv1a64(content);

  std::size_t line_no = 0;
  std::size_t pos = 0;
  std::optional<std::size_t> declared_count;
  while (pos < content.size()) {
    std::size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) nl = content.size();
    std::string_view line(content.data() + pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    auto fields = split_fields(line);
    if (fields.empty()) continue;

    if (line_no == 1 && fields.size() == 2) {
      std::size_t count = 0;
      std::size_t dim = 0;
      if (parse_number(fields[0], count) && parse_number(fields[1], dim)) {
        if (dim == 0) throw ParseError(path.string() + ":1: header declares dimension 0");
        declared_count = count;
        store.dim_ = dim;
        continue;
      }
    }
    if (fields.size() < 2) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected a token followed by vector values");
    }
    const std::size_t dim = fields.size() - 1;
    if (store.dim_ == 0) store.dim_ = dim;
    if (dim != store.dim_) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": dimension " +
                       std::to_string(dim) + " differs from " + std::to_string(store.dim_));
    }
    std::vector<double> row(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      if (!parse_number(fields[j + 1], row[j])) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": malformed value '" +
                         std::string(fields[j + 1]) + "'");
      }
    }
    std::string token(fields[0]);
    if (store.index_.count(token)) {
      warn("embedding file " + path.string() + ":" + std::to_string(line_no) +
           ": duplicate token '" + token + "' ignored (first occurrence wins)");
      continue;
    }
    store.index_.emplace(token, store.tokens_.size());
    store.tokens_.push_back(std::move(token));
    store.matrix_.insert(store.matrix_.end(), row.begin(), row.end());
  }
  if (store.dim_ == 0) throw ParseError(path.string() + ": no vectors found");
  if (declared_count && *declared_count != store.tokens_.size()) {
    warn("embedding file " + path.string() + ": header declares " +
         std::to_string(*declared_count) + " vectors, found " +
         std::to_string(store.tokens_.size()));
  }
  return store;
}

EmbeddingStore EmbeddingStore::hashed_only(std::size_t dim, NgramHashConfig hash) {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  EmbeddingStore store;
  store.dim_ = dim;
  store.hash_ = hash;
  const std::string tag = "hashed-only:" + std::to_string(dim) + ":" + std::to_string(hash.seed) +
                          ":" + std::to_string(hash.buckets) + ":" + std::to_string(hash.min_n) +
                          "-" + std::to_string(hash.max_n);
  store.fingerprint_ = fnv1a64(tag);
  return store;
}

std::optional<std::size_t> EmbeddingStore::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::span<const double> EmbeddingStore::row(std::size_t index) const {
  return std::span<const double>(matrix_).subspan(index * dim_, dim_);
}

std::vector<std::uint64_t> EmbeddingStore::ngram_buckets(std::string_view token) const {
  const std::string padded = "<" + std::string(token) + ">";
  std::vector<std::uint64_t> buckets;
  for (std::size_t n = hash_.min_n; n <= hash_.max_n; ++n) {
    if (n > padded.size()) break;
    for (std::size_t i = 0; i + n <= padded.size(); ++i) {
      const std::string_view gram(padded.data() + i, n);
      buckets.push_back(fnv1a64(gram) % hash_.buckets);
    }
  }
  return buckets;
}

double EmbeddingStore::bucket_coordinate(std::uint64_t bucket, std::size_t coordinate) const {
  const std::uint64_t h =
      splitmix64(splitmix64(hash_.seed ^ (bucket * 0x9E3779B97F4A7C15ULL)) + coordinate);
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return (2.0 * u - 1.0) * hash_.init_range;
}

std::vector<double> EmbeddingStore::embed_token(std::string_view token) const {
  if (auto idx = find(token)) {
    auto r = row(*idx);
    return {r.begin(), r.end()};
  }
  std::vector<double> v(dim_, 0.0);
  const auto buckets = ngram_buckets(token);
  if (buckets.empty()) return v;
  for (auto b : buckets) {
    for (std::size_t j = 0; j < dim_; ++j) v[j] += bucket_coordinate(b, j);
  }
  const double inv = 1.0 / static_cast<double>(buckets.size());
  for (double& x : v) x *= inv;
  return v;
}

std::vector<std::vector<double>> EmbeddingStore::embed_sequence(
    std::span<const std::string> tokens) const {
  std::vector<std::vector<double>> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(embed_token(t));
  return out;
}

}  // namespace deeper::text
