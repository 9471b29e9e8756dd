#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "labelforge/project_state.hpp"

namespace labelforge {

// Two-coder cross tabulation: counts[row * k + col], row = first coder's label.
struct AgreementTable {
  std::size_t categories = 0;
  std::vector<std::uint64_t> counts;

  explicit AgreementTable(std::size_t k = 0) : categories(k), counts(k * k, 0) {}
  AgreementTable(std::size_t k, std::vector<std::uint64_t> values);

  std::uint64_t& at(std::size_t row, std::size_t col) { return counts[row * categories + col]; }
  std::uint64_t at(std::size_t row, std::size_t col) const { return counts[row * categories + col]; }
  std::uint64_t total() const;
  AgreementTable transposed() const;
};

// Items x categories; entry = number of coders who chose that category.
struct RatingsMatrix {
  std::size_t categories = 0;
  std::vector<std::vector<std::uint32_t>> rows;
};

// Throws Error(precondition_failed, "no double-coded items") on an empty table.
double cohens_kappa(const AgreementTable& table);

// Throws on no items, fewer than 2 ratings per item, or "ragged ratings".
double fleiss_kappa(const RatingsMatrix& ratings);

// Mean over items of agreeing coder pairs / all coder pairs.
double percent_agreement_overall(const RatingsMatrix& ratings);

// ---- project-level views ----------------------------------------------------
// Inputs are non-superseded coder-source annotations on double-coded records;
// admin adjudications and pre-labels never count.

struct PairAgreement {
  CoderId first;  // lexicographically smaller username
  CoderId second;
  std::string first_username;
  std::string second_username;
  std::size_t shared_items = 0;
  double agreement = 0.0;
};

std::vector<PairAgreement> pairwise_percent_agreement(const ProjectState& state);

// With a pair: that pair's table. Without: the sum over every unordered pair.
// Rows always belong to the coder with the smaller username. Categories follow
// the project's label order.
AgreementTable agreement_matrix(const ProjectState& state,
                                std::optional<std::pair<CoderId, CoderId>> pair = std::nullopt);

// Items with at least irr_coder_count ratings, trimmed to the earliest
// irr_coder_count annotations.
RatingsMatrix ratings_matrix(const ProjectState& state);

struct IrrSummary {
  bool enabled = false;
  std::string statistic;  // "cohen", "fleiss" or empty when nothing is double-coded yet
  std::optional<double> kappa;
  std::optional<double> percent_overall;
  std::size_t items = 0;
  std::vector<PairAgreement> pairs;
  AgreementTable matrix;
  std::vector<std::string> label_names;
};

IrrSummary irr_summary(const ProjectState& state);

}  // namespace labelforge
