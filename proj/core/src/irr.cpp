#include "labelforge/irr.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "labelforge/error.hpp"

namespace labelforge {

AgreementTable::AgreementTable(std::size_t k, std::vector<std::uint64_t> values)
    : categories(k), counts(std::move(values)) {
  if (counts.size() != k * k) throw Error(ErrorCode::invalid_argument, "agreement table must be k x k");
}

std::uint64_t AgreementTable::total() const {
  std::uint64_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

AgreementTable AgreementTable::transposed() const {
  AgreementTable t(categories);
  for (std::size_t i = 0; i < categories; ++i)
    for (std::size_t j = 0; j < categories; ++j) t.at(j, i) = at(i, j);
  return t;
}

double cohens_kappa(const AgreementTable& table) {
  const auto n = static_cast<double>(table.total());
  if (n == 0.0) throw Error(ErrorCode::precondition_failed, "no double-coded items");
  const std::size_t k = table.categories;
  double observed = 0.0, expected = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    observed += static_cast<double>(table.at(i, i));
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      row += static_cast<double>(table.at(i, j));
      col += static_cast<double>(table.at(j, i));
    }
    expected += (row / n) * (col / n);
  }
  observed /= n;
  if (expected >= 1.0) return 1.0;
  return (observed - expected) / (1.0 - expected);
}

namespace {

// Validates shape; returns ratings per item.
std::uint32_t ratings_per_item(const RatingsMatrix& m) {
  if (m.rows.empty()) throw Error(ErrorCode::precondition_failed, "no double-coded items");
  std::uint32_t n = 0;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    if (m.rows[i].size() != m.categories)
      throw Error(ErrorCode::invalid_argument, "ratings row has wrong category count");
    std::uint32_t s = 0;
    for (auto v : m.rows[i]) s += v;
    if (i == 0) n = s;
    if (s != n) throw Error(ErrorCode::invalid_argument, "ragged ratings");
  }
  if (n < 2) throw Error(ErrorCode::invalid_argument, "at least 2 ratings per item required");
  return n;
}

double mean_item_agreement(const RatingsMatrix& m, std::uint32_t n) {
  const double nn = n;
  double sum = 0.0;
  for (const auto& row : m.rows) {
    double sq = 0.0;
    for (auto v : row) sq += static_cast<double>(v) * v;
    sum += (sq - nn) / (nn * (nn - 1.0));
  }
  return sum / static_cast<double>(m.rows.size());
}

}  // namespace

double fleiss_kappa(const RatingsMatrix& ratings) {
  const auto n = ratings_per_item(ratings);
  const double total = static_cast<double>(ratings.rows.size()) * n;
  double expected = 0.0;
  for (std::size_t j = 0; j < ratings.categories; ++j) {
    double col = 0.0;
    for (const auto& row : ratings.rows) col += row[j];
    double p = col / total;
    expected += p * p;
  }
  const double observed = mean_item_agreement(ratings, n);
  if (expected >= 1.0) return 1.0;
  return (observed - expected) / (1.0 - expected);
}

double percent_agreement_overall(const RatingsMatrix& ratings) {
  return mean_item_agreement(ratings, ratings_per_item(ratings));
}

namespace {

struct Vote {
  CoderId coder;
  std::size_t category;
  TimePoint at;
  AnnotationId id;
};

std::size_t label_position(const ProjectState& state, LabelId id) {
  for (std::size_t i = 0; i < state.labels.size(); ++i)
    if (state.labels[i].id == id) return i;
  throw Error(ErrorCode::internal, "annotation references unknown label");
}

// Double-coded record -> its IRR votes (one per coder, earliest first).
std::map<std::uint64_t, std::vector<Vote>> irr_votes(const ProjectState& state) {
  std::map<std::uint64_t, std::vector<Vote>> out;
  for (const auto& r : state.records) {
    if (!r.double_coded) continue;
    std::vector<Vote> votes;
    for (auto idx : state.annotations_of(r.id)) {
      const auto& a = state.annotations[idx];
      if (a.superseded || a.source != AnnotationSource::coder) continue;
      votes.push_back(Vote{a.coder_id, label_position(state, a.label_id), a.created_at, a.id});
    }
    if (votes.empty()) continue;
    std::sort(votes.begin(), votes.end(), [](const Vote& a, const Vote& b) {
      return a.at != b.at ? a.at < b.at : a.id < b.id;
    });
    out.emplace(r.upload_order, std::move(votes));
  }
  return out;
}

std::string username_of(const ProjectState& state, CoderId id) {
  if (const auto* m = state.find_member(id)) return m->username;
  return to_string(id);
}

// Ordered (row coder, column coder) by username.
std::pair<CoderId, CoderId> ordered_pair(const ProjectState& state, CoderId a, CoderId b) {
  auto ua = username_of(state, a), ub = username_of(state, b);
  if (ub < ua || (ub == ua && b < a)) return {b, a};
  return {a, b};
}

void add_pair_votes(const std::vector<Vote>& votes, CoderId row, CoderId col, AgreementTable& table) {
  std::optional<std::size_t> rv, cv;
  for (const auto& v : votes) {
    if (v.coder == row) rv = v.category;
    if (v.coder == col) cv = v.category;
  }
  if (rv && cv) ++table.at(*rv, *cv);
}

std::set<CoderId> coders_in(const std::map<std::uint64_t, std::vector<Vote>>& votes) {
  std::set<CoderId> coders;
  for (const auto& [_, vs] : votes)
    for (const auto& v : vs) coders.insert(v.coder);
  return coders;
}

}  // namespace

std::vector<PairAgreement> pairwise_percent_agreement(const ProjectState& state) {
  auto votes = irr_votes(state);
  auto coders = coders_in(votes);
  std::vector<CoderId> list(coders.begin(), coders.end());
  std::vector<PairAgreement> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    for (std::size_t j = i + 1; j < list.size(); ++j) {
      auto [row, col] = ordered_pair(state, list[i], list[j]);
      AgreementTable t(state.labels.size());
      for (const auto& [_, vs] : votes) add_pair_votes(vs, row, col, t);
      auto n = t.total();
      if (n == 0) continue;
      std::uint64_t diag = 0;
      for (std::size_t c = 0; c < t.categories; ++c) diag += t.at(c, c);
      out.push_back(PairAgreement{row, col, username_of(state, row), username_of(state, col), n,
                                  static_cast<double>(diag) / static_cast<double>(n)});
    }
  }
  std::sort(out.begin(), out.end(), [](const PairAgreement& a, const PairAgreement& b) {
    return std::tie(a.first_username, a.second_username) < std::tie(b.first_username, b.second_username);
  });
  return out;
}

AgreementTable agreement_matrix(const ProjectState& state, std::optional<std::pair<CoderId, CoderId>> pair) {
  auto votes = irr_votes(state);
  AgreementTable table(state.labels.size());
  if (pair) {
    auto [row, col] = ordered_pair(state, pair->first, pair->second);
    for (const auto& [_, vs] : votes) add_pair_votes(vs, row, col, table);
    return table;
  }
  for (const auto& [_, vs] : votes) {
    for (std::size_t i = 0; i < vs.size(); ++i) {
      for (std::size_t j = i + 1; j < vs.size(); ++j) {
        if (vs[i].coder == vs[j].coder) continue;
        auto [row, col] = ordered_pair(state, vs[i].coder, vs[j].coder);
        const auto& rv = vs[i].coder == row ? vs[i] : vs[j];
        const auto& cv = vs[i].coder == row ? vs[j] : vs[i];
        ++table.at(rv.category, cv.category);
      }
    }
  }
  return table;
}

RatingsMatrix ratings_matrix(const ProjectState& state) {
  const auto n = static_cast<std::size_t>(state.project.settings.irr_coder_count);
  RatingsMatrix m;
  m.categories = state.labels.size();
  for (const auto& [_, vs] : irr_votes(state)) {
    if (vs.size() < n) continue;
    std::vector<std::uint32_t> row(m.categories, 0);
    for (std::size_t i = 0; i < n; ++i) ++row[vs[i].category];
    m.rows.push_back(std::move(row));
  }
  return m;
}

IrrSummary irr_summary(const ProjectState& state) {
  IrrSummary s;
  s.enabled = state.project.settings.irr_enabled;
  for (const auto& l : state.labels) s.label_names.push_back(l.name);
  s.matrix = AgreementTable(state.labels.size());
  if (!s.enabled) return s;

  s.pairs = pairwise_percent_agreement(state);
  s.matrix = agreement_matrix(state);

  auto ratings = ratings_matrix(state);
  std::set<CoderId> coders;
  {
    const auto n = static_cast<std::size_t>(state.project.settings.irr_coder_count);
    for (const auto& [_, vs] : irr_votes(state))
      if (vs.size() >= n)
        for (std::size_t i = 0; i < n; ++i) coders.insert(vs[i].coder);
  }
  if (coders.size() == 2) {
    auto it = coders.begin();
    auto a = *it++;
    auto table = agreement_matrix(state, std::make_pair(a, *it));
    if (table.total() > 0) {
      s.statistic = "cohen";
      s.kappa = cohens_kappa(table);
      s.items = table.total();
      s.percent_overall = percent_agreement_overall(ratings);
    }
  } else if (!ratings.rows.empty()) {
    s.statistic = "fleiss";
    s.kappa = fleiss_kappa(ratings);
    s.items = ratings.rows.size();
    s.percent_overall = percent_agreement_overall(ratings);
  }
  return s;
}

}  // namespace labelforge
