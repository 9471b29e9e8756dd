#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "labelforge/classifier.hpp"
#include "labelforge/project_state.hpp"

namespace labelforge {

// Uncertainty measures over a probability vector; higher = more uncertain.
double score_least_confident(std::span<const double> p);  // 1 - max p
double score_margin(std::span<const double> p);           // 1 - (p1 - p2); throws if k < 2
double score_entropy(std::span<const double> p);          // -sum p ln p, 0 ln 0 = 0

// Dispatches on method; AlMethod::random is rejected.
double uncertainty_score(AlMethod method, std::span<const double> p);

struct Candidate {
  RecordId id;
  std::uint64_t upload_order = 0;
  double score = 0.0;
};

// The n highest scores; ties go to the lower upload_order.
std::vector<RecordId> select_top(std::vector<Candidate> candidates, std::size_t n);

// n candidates drawn uniformly without replacement; candidates are ordered by
// upload_order before the seeded shuffle so the draw depends only on the seed
// and the candidate set.
std::vector<RecordId> select_random(std::vector<Candidate> candidates, std::size_t n, std::uint64_t seed);

std::uint64_t batch_seed(ProjectId project, int batch_index);

// Picks the next batch among unlabeled records and moves them to in_batch.
// Random when `model` is null or method is random, otherwise the top
// batch_size by uncertainty. Throws Error(precondition_failed, "corpus
// exhausted") when nothing is unlabeled.
const Batch& select_batch(ProjectState& state, const LinearModel* model, AlMethod method,
                          std::size_t batch_size);

// The retrain-evaluate-select cycle split in three so that training can run
// without holding the project's writer lock.
struct CycleInput {
  ProjectId project;
  ProjectSettings settings;
  int completed_batch_index = -1;  // -1: seeding before the first batch
  int next_batch_index = 0;
  std::vector<std::size_t> training_positions;
  std::vector<std::string> training_labels;
  std::vector<std::size_t> candidate_positions;
  std::vector<Candidate> candidates;
  std::shared_ptr<const std::vector<SparseVector>> features;
};

struct CycleResult {
  int next_batch_index = 0;
  std::optional<ModelSnapshot> snapshot;
  std::shared_ptr<const LinearModel> model;  // null when training was skipped or degenerate
  AlMethod method = AlMethod::random;
  std::vector<Candidate> scored;
};

struct CycleOutcome {
  std::optional<int> snapshot_batch_index;
  std::optional<int> next_batch_index;  // nullopt when the corpus is exhausted
  AlMethod next_selection = AlMethod::random;
};

// Throws Error(precondition_failed, "batch incomplete") while a batch is open.
CycleInput prepare_cycle(const ProjectState& state);
CycleResult compute_cycle(const CycleInput& input, TimePoint now);
// Throws Error(conflict) if the state moved on since prepare_cycle.
CycleOutcome commit_cycle(ProjectState& state, CycleResult result);

CycleOutcome run_cycle(ProjectState& state, TimePoint now);

}  // namespace labelforge
