#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace labelforge {

// Name recorded in exported vectorizer files; identifies the rule in tokenize().
inline constexpr std::string_view kTokenizerName = "unicode_alnum_min2_lower";

// Lowercased maximal runs of Unicode alphanumeric code points (Alphabetic or
// Numeric), keeping runs of at least two code points. Invalid UTF-8 bytes act
// as separators.
std::vector<std::string> tokenize(std::string_view text);

// Sparse vector with strictly increasing indices.
struct SparseVector {
  std::size_t dimension = 0;
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  bool is_zero() const { return indices.empty(); }
  std::size_t nnz() const { return indices.size(); }
  double l2_norm() const;
  double at(std::uint32_t index) const;
};

class Vocabulary {
 public:
  Vocabulary() = default;

  // Fits document frequencies over the whole corpus, keeps the max_vocabulary
  // highest-df tokens (ties resolved lexicographically) and stores them in
  // lexicographic order. Throws when the corpus yields no tokens.
  static Vocabulary fit(std::span<const std::string> corpus, std::size_t max_vocabulary);

  // Rebuilds a fitted vocabulary from persisted parts.
  static Vocabulary from_parts(std::vector<std::string> tokens,
                               std::vector<std::uint64_t> document_frequency,
                               std::uint64_t corpus_size);

  // Raw term counts times idf, L2-normalized. Out-of-vocabulary tokens are
  // ignored; an all-OOV text maps to the zero vector.
  SparseVector transform(std::string_view text) const;

  std::optional<std::uint32_t> index_of(std::string_view token) const;

  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::uint64_t>& document_frequency() const { return df_; }
  const std::vector<double>& idf() const { return idf_; }
  std::uint64_t corpus_size() const { return corpus_size_; }
  std::size_t size() const { return tokens_.size(); }

 private:
  void build_index();

  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> df_;
  std::vector<double> idf_;
  std::uint64_t corpus_size_ = 0;
  std::unordered_map<std::string, std::uint32_t> index_;
};

// ln((1 + N) / (1 + df)) + 1
double smoothed_idf(std::uint64_t corpus_size, std::uint64_t document_frequency);

}  // namespace labelforge
