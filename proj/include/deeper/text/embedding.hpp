#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace deeper::text {

// Out-of-vocabulary vectors: the mean of hashed character n-gram bucket
// vectors over the "<token>" form. Bucket vectors are never materialized;
// each coordinate is a counter-based hash of (seed, bucket, coordinate)
// mapped uniformly into [-init_range, init_range].
struct NgramHashConfig {
  std::uint64_t buckets = std::uint64_t{1} << 21;
  std::size_t min_n = 3;
  std::size_t max_n = 6;
  std::uint64_t seed = 0x5EEDF00DULL;
  double init_range = 0.05;
};

class EmbeddingStore {
 public:
  // Text format: optional "count dim" header, then "token v1 ... vdim" lines.
  static EmbeddingStore load(const std::filesystem::path& path, NgramHashConfig hash = {});
  // Empty vocabulary: every token goes through the n-gram path.
  static EmbeddingStore hashed_only(std::size_t dim, NgramHashConfig hash = {});

  std::size_t dim() const { return dim_; }
  std::size_t vocab_size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::optional<std::size_t> find(std::string_view token) const;
  std::span<const double> row(std::size_t index) const;
  const std::vector<double>& matrix() const { return matrix_; }
  const NgramHashConfig& hash_config() const { return hash_; }
  // 64-bit FNV-1a of the source file bytes (or of the hashed-only settings).
  std::uint64_t fingerprint() const { return fingerprint_; }

  std::vector<double> embed_token(std::string_view token) const;
  std::vector<std::vector<double>> embed_sequence(std::span<const std::string> tokens) const;

  std::vector<std::uint64_t> ngram_buckets(std::string_view token) const;
  double bucket_coordinate(std::uint64_t bucket, std::size_t coordinate) const;

 private:
  EmbeddingStore() = default;

  std::size_t dim_ = 0;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> matrix_;
  NgramHashConfig hash_;
  std::uint64_t fingerprint_ = 0;
};

std::string fingerprint_hex(std::uint64_t fingerprint);

}  // namespace deeper::text
