#include "labelforge/active_learning.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "labelforge/error.hpp"
#include "labelforge/rng.hpp"

namespace labelforge {

double score_least_confident(std::span<const double> p) {
  if (p.empty()) throw Error(ErrorCode::invalid_argument, "empty probability vector");
  return 1.0 - *std::max_element(p.begin(), p.end());
}

double score_margin(std::span<const double> p) {
  if (p.size() < 2) throw Error(ErrorCode::invalid_argument, "margin needs at least 2 classes");
  double first = -1.0, second = -1.0;
  for (double v : p) {
    if (v > first) {
      second = first;
      first = v;
    } else if (v > second) {
      second = v;
    }
  }
  return 1.0 - (first - second);
}

double score_entropy(std::span<const double> p) {
  if (p.empty()) throw Error(ErrorCode::invalid_argument, "empty probability vector");
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

double uncertainty_score(AlMethod method, std::span<const double> p) {
  switch (method) {
    case AlMethod::least_confident: return score_least_confident(p);
    case AlMethod::margin: return score_margin(p);
    case AlMethod::entropy: return score_entropy(p);
    case AlMethod::random: break;
  }
  throw Error(ErrorCode::invalid_argument, "random selection has no uncertainty score");
}

std::vector<RecordId> select_top(std::vector<Candidate> candidates, std::size_t n) {
  n = std::min(n, candidates.size());
  auto better = [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.upload_order < b.upload_order;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n),
                    candidates.end(), better);
  std::vector<RecordId> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(candidates[i].id);
  return out;
}

std::vector<RecordId> select_random(std::vector<Candidate> candidates, std::size_t n, std::uint64_t seed) {
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) { return a.upload_order < b.upload_order; });
  deterministic_shuffle(std::span<Candidate>(candidates), seed);
  n = std::min(n, candidates.size());
  std::vector<RecordId> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(candidates[i].id);
  return out;
}

std::uint64_t batch_seed(ProjectId project, int batch_index) {
  return mix_seed(project.value, static_cast<std::uint64_t>(batch_index));
}

namespace {

const Batch& create_batch(ProjectState& state, const std::vector<RecordId>& chosen, AlMethod method) {
  const auto& settings = state.project.settings;
  Batch batch;
  batch.id = BatchId{state.allocate_id()};
  batch.index = static_cast<int>(state.batches.size());
  batch.selection_method = method;
  batch.record_ids = chosen;
  if (settings.irr_enabled) {
    // ceil(overlap% * batch_size), capped at the actual batch length
    auto wanted = (static_cast<std::size_t>(settings.irr_overlap_percent) *
                       static_cast<std::size_t>(settings.batch_size) +
                   99) /
                  100;
    batch.double_coded_count = std::min(wanted, chosen.size());
  }
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    Record* r = state.find_record(chosen[i]);
    transition_record_status(*r, RecordEvent::select_into_batch);
    r->batch_index = batch.index;
    r->double_coded = i < batch.double_coded_count;
  }
  state.batches.push_back(std::move(batch));
  return state.batches.back();
}

std::vector<Candidate> unlabeled_candidates(const ProjectState& state, std::vector<std::size_t>* positions) {
  std::vector<Candidate> out;
  for (std::size_t i = 0; i < state.records.size(); ++i) {
    const auto& r = state.records[i];
    if (r.status != RecordStatus::unlabeled) continue;
    out.push_back(Candidate{r.id, r.upload_order, 0.0});
    if (positions) positions->push_back(i);
  }
  return out;
}

}  // namespace

const Batch& select_batch(ProjectState& state, const LinearModel* model, AlMethod method,
                          std::size_t batch_size) {
  if (state.open_batch()) throw Error(ErrorCode::precondition_failed, "a batch is already open");
  std::vector<std::size_t> positions;
  auto candidates = unlabeled_candidates(state, &positions);
  if (candidates.empty()) throw Error(ErrorCode::precondition_failed, "corpus exhausted");

  const int index = static_cast<int>(state.batches.size());
  if (!model || method == AlMethod::random || !state.features) {
    return create_batch(state, select_random(std::move(candidates), batch_size, batch_seed(state.project.id, index)),
                        AlMethod::random);
  }
  for (std::size_t i = 0; i < candidates.size(); ++i)
    candidates[i].score = uncertainty_score(method, predict_proba(*model, (*state.features)[positions[i]]));
  return create_batch(state, select_top(std::move(candidates), batch_size), method);
}

CycleInput prepare_cycle(const ProjectState& state) {
  if (const auto* cur = state.current_batch(); cur && cur->status != BatchStatus::complete)
    throw Error(ErrorCode::precondition_failed, "batch incomplete");

  CycleInput in;
  in.project = state.project.id;
  in.settings = state.project.settings;
  in.completed_batch_index = state.batches.empty() ? -1 : state.batches.back().index;
  in.next_batch_index = static_cast<int>(state.batches.size());
  in.features = state.features;
  for (std::size_t i = 0; i < state.records.size(); ++i) {
    const auto& r = state.records[i];
    if (r.status == RecordStatus::labeled && r.final_label) {
      in.training_positions.push_back(i);
      in.training_labels.push_back(state.find_label(*r.final_label)->name);
    }
  }
  in.candidates = unlabeled_candidates(state, &in.candidate_positions);
  return in;
}

CycleResult compute_cycle(const CycleInput& in, TimePoint now) {
  CycleResult out;
  out.next_batch_index = in.next_batch_index;
  out.scored = in.candidates;

  const bool can_train = in.settings.al_enabled && in.features &&
                         std::set<std::string>(in.training_labels.begin(), in.training_labels.end()).size() >= 2;
  if (!can_train) return out;

  std::vector<SparseVector> x;
  x.reserve(in.training_positions.size());
  for (auto pos : in.training_positions) x.push_back((*in.features)[pos]);
  const auto seed = batch_seed(in.project, in.next_batch_index);
  auto model = std::make_shared<const LinearModel>(train(x, in.training_labels, in.settings.l2_lambda, seed));
  out.model = model;

  if (in.completed_batch_index >= 0) {
    ModelSnapshot snap;
    snap.batch_index = in.completed_batch_index;
    snap.model = *model;
    snap.trained_at = now;
    snap.training_size = x.size();
    snap.metrics = cross_validate(x, in.training_labels, in.settings.cv_folds, seed, in.settings.l2_lambda);
    out.snapshot = std::move(snap);
  }

  if (in.settings.al_method != AlMethod::random) {
    out.method = in.settings.al_method;
    for (std::size_t i = 0; i < out.scored.size(); ++i) {
      auto p = predict_proba(*model, (*in.features)[in.candidate_positions[i]]);
      out.scored[i].score = uncertainty_score(out.method, p);
    }
  }
  return out;
}

CycleOutcome commit_cycle(ProjectState& state, CycleResult result) {
  if (static_cast<int>(state.batches.size()) != result.next_batch_index || state.open_batch())
    throw Error(ErrorCode::conflict, "project state changed during the cycle");

  CycleOutcome outcome;
  state.cycled_batch_index = result.next_batch_index - 1;
  if (result.snapshot) {
    outcome.snapshot_batch_index = result.snapshot->batch_index;
    state.snapshots.push_back(std::move(*result.snapshot));
  }
  if (result.model) state.selection_model = result.model;

  // Records may have been admin-labeled or discarded while the cycle ran.
  std::erase_if(result.scored, [&](const Candidate& c) {
    const Record* r = state.find_record(c.id);
    return !r || r->status != RecordStatus::unlabeled;
  });
  if (result.scored.empty()) return outcome;

  const auto batch_size = static_cast<std::size_t>(state.project.settings.batch_size);
  std::vector<RecordId> chosen;
  AlMethod method = AlMethod::random;
  if (result.model && result.method != AlMethod::random) {
    method = result.method;
    chosen = select_top(std::move(result.scored), batch_size);
  } else {
    chosen = select_random(std::move(result.scored), batch_size,
                           batch_seed(state.project.id, result.next_batch_index));
  }
  const Batch& b = create_batch(state, chosen, method);
  outcome.next_batch_index = b.index;
  outcome.next_selection = method;
  return outcome;
}

CycleOutcome run_cycle(ProjectState& state, TimePoint now) {
  return commit_cycle(state, compute_cycle(prepare_cycle(state), now));
}

}  // namespace labelforge
