#include "labelforge/vectorizer.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include "labelforge/error.hpp"

namespace labelforge {
namespace {

bool is_alnum(UChar32 c) {
  if (u_hasBinaryProperty(c, UCHAR_ALPHABETIC)) return true;
  auto type = u_charType(c);
  return type == U_DECIMAL_DIGIT_NUMBER || type == U_LETTER_NUMBER || type == U_OTHER_NUMBER;
}

void append_utf8(std::string& out, UChar32 c) {
  char buf[U8_MAX_LENGTH];
  std::int32_t len = 0;
  UBool error = false;
  U8_APPEND(reinterpret_cast<std::uint8_t*>(buf), len, U8_MAX_LENGTH, c, error);
  if (!error) out.append(buf, static_cast<std::size_t>(len));
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t code_points = 0;
  auto flush = [&] {
    if (code_points >= 2) tokens.push_back(std::move(current));
    current.clear();
    code_points = 0;
  };

  const auto* bytes = reinterpret_cast<const std::uint8_t*>(text.data());
  const auto length = static_cast<std::int32_t>(text.size());
  std::int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(bytes, i, length, c);
    if (c >= 0 && is_alnum(c)) {
      append_utf8(current, u_tolower(c));
      ++code_points;
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

double SparseVector::l2_norm() const {
  double sum = 0.0;
  for (double v : values) sum += v * v;
  return std::sqrt(sum);
}

double SparseVector::at(std::uint32_t index) const {
  auto it = std::lower_bound(indices.begin(), indices.end(), index);
  if (it == indices.end() || *it != index) return 0.0;
  return values[static_cast<std::size_t>(it - indices.begin())];
}

double smoothed_idf(std::uint64_t corpus_size, std::uint64_t document_frequency) {
  return std::log((1.0 + static_cast<double>(corpus_size)) /
                  (1.0 + static_cast<double>(document_frequency))) +
         1.0;
}

Vocabulary Vocabulary::fit(std::span<const std::string> corpus, std::size_t max_vocabulary) {
  if (corpus.empty()) throw Error(ErrorCode::invalid_argument, "empty corpus");

  std::map<std::string, std::uint64_t> df;
  for (const auto& doc : corpus) {
    auto toks = tokenize(doc);
    std::sort(toks.begin(), toks.end());
    toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
    for (auto& t : toks) ++df[std::move(t)];
  }
  if (df.empty()) throw Error(ErrorCode::invalid_argument, "empty vocabulary");

  std::vector<std::pair<std::string, std::uint64_t>> entries(df.begin(), df.end());
  if (entries.size() > max_vocabulary) {
    // std::map iteration is already lexicographic, so a stable sort on df
    // leaves ties in lexicographic order.
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    entries.resize(max_vocabulary);
    std::sort(entries.begin(), entries.end());
  }

  std::vector<std::string> tokens;
  std::vector<std::uint64_t> freqs;
  tokens.reserve(entries.size());
  freqs.reserve(entries.size());
  for (auto& [tok, f] : entries) {
    tokens.push_back(std::move(tok));
    freqs.push_back(f);
  }
  return from_parts(std::move(tokens), std::move(freqs), corpus.size());
}

Vocabulary Vocabulary::from_parts(std::vector<std::string> tokens,
                                  std::vector<std::uint64_t> document_frequency,
                                  std::uint64_t corpus_size) {
  if (tokens.size() != document_frequency.size())
    throw Error(ErrorCode::invalid_argument, "vocabulary token/df length mismatch");
  if (tokens.empty()) throw Error(ErrorCode::invalid_argument, "empty vocabulary");
  if (corpus_size == 0) throw Error(ErrorCode::invalid_argument, "corpus size must be positive");
  if (!std::is_sorted(tokens.begin(), tokens.end()) ||
      std::adjacent_find(tokens.begin(), tokens.end()) != tokens.end())
    throw Error(ErrorCode::invalid_argument, "vocabulary tokens must be sorted and unique");

  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.df_ = std::move(document_frequency);
  v.corpus_size_ = corpus_size;
  v.idf_.reserve(v.df_.size());
  for (auto f : v.df_) {
    if (f == 0 || f > corpus_size)
      throw Error(ErrorCode::invalid_argument, "document frequency out of range");
    v.idf_.push_back(smoothed_idf(corpus_size, f));
  }
  v.build_index();
  return v;
}

void Vocabulary::build_index() {
  index_.clear();
  index_.reserve(tokens_.size());
  for (std::uint32_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
}

std::optional<std::uint32_t> Vocabulary::index_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

SparseVector Vocabulary::transform(std::string_view text) const {
  std::map<std::uint32_t, double> counts;
  for (const auto& tok : tokenize(text)) {
    if (auto idx = index_of(tok)) counts[*idx] += 1.0;
  }

  SparseVector out;
  out.dimension = tokens_.size();
  out.indices.reserve(counts.size());
  out.values.reserve(counts.size());
  double sq = 0.0;
  for (auto [idx, count] : counts) {
    double w = count * idf_[idx];
    out.indices.push_back(idx);
    out.values.push_back(w);
    sq += w * w;
  }
  if (sq > 0.0) {
    double norm = std::sqrt(sq);
    for (auto& v : out.values) v /= norm;
  }
  return out;
}

}  // namespace labelforge
