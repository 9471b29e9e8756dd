#pragma once

#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "labelforge/classifier.hpp"
#include "labelforge/domain.hpp"
#include "labelforge/vectorizer.hpp"

namespace labelforge {

enum class BatchStatus { open, complete };

struct Batch {
  BatchId id;
  int index = 0;
  std::vector<RecordId> record_ids;  // selection order
  AlMethod selection_method = AlMethod::random;
  BatchStatus status = BatchStatus::open;
  std::size_t double_coded_count = 0;  // leading records of record_ids
};

enum class AssignmentResolution { pending, labeled, skipped, expired };

std::string_view to_string(AssignmentResolution r);
std::string_view to_string(BatchStatus s);

struct Assignment {
  AssignmentId id;
  RecordId record_id;
  CoderId coder_id;
  TimePoint issued_at{};
  TimePoint lease_expires_at{};
  TimePoint displayed_at{};
  std::optional<TimePoint> resolved_at;
  AssignmentResolution resolution = AssignmentResolution::pending;
};

// Everything the workflow knows about one project. A plain value: copying it
// yields an independent snapshot (the fitted vocabulary and cached features
// are immutable and shared).
struct ProjectState {
  Project project;
  std::vector<LabelClass> labels;
  std::vector<Coder> members;
  std::vector<Record> records;  // upload order
  std::vector<Annotation> annotations;
  std::vector<Assignment> assignments;
  std::vector<Batch> batches;
  std::vector<ModelSnapshot> snapshots;
  // Model used for the most recent selection; either the last snapshot's model
  // or one trained on pre-labeled seeds before the first batch.
  std::shared_ptr<const LinearModel> selection_model;
  std::shared_ptr<const Vocabulary> vocabulary;
  std::shared_ptr<const std::vector<SparseVector>> features;  // parallel to records
  std::uint64_t next_sequence = 1;
  // Index of the last completed batch the retrain cycle has processed.
  int cycled_batch_index = -1;

  std::uint64_t allocate_id() { return compose_id(project.id, next_sequence++); }

  // Lookups; rebuild_indexes() must run after any bulk change to the vectors.
  void rebuild_indexes();
  Record* find_record(RecordId id);
  const Record* find_record(RecordId id) const;
  std::size_t record_position(RecordId id) const;
  Assignment* find_assignment(AssignmentId id);
  const Annotation* find_annotation(AnnotationId id) const;
  Annotation* find_annotation(AnnotationId id);
  const LabelClass* find_label(LabelId id) const;
  const LabelClass* find_label(std::string_view name) const;
  const Coder* find_member(CoderId id) const;
  bool is_member(CoderId id) const { return find_member(id) != nullptr; }

  Batch* open_batch();
  const Batch* open_batch() const;
  const Batch* current_batch() const { return batches.empty() ? nullptr : &batches.back(); }

  std::size_t capacity(const Record& r) const {
    return r.double_coded ? static_cast<std::size_t>(project.settings.irr_coder_count) : 1;
  }

  void append_annotation(Annotation a);
  void append_assignment(Assignment a);

  // Indexes into annotations / assignments per record.
  const std::vector<std::size_t>& annotations_of(RecordId id) const;
  const std::vector<std::size_t>& assignments_of(RecordId id) const;

  // Computes features for every record with the fitted vocabulary.
  void compute_features();

 private:
  std::unordered_map<RecordId, std::size_t> record_index_;
  std::unordered_map<AssignmentId, std::size_t> assignment_index_;
  std::unordered_map<AnnotationId, std::size_t> annotation_index_;
  std::unordered_map<RecordId, std::vector<std::size_t>> annotations_by_record_;
  std::unordered_map<RecordId, std::vector<std::size_t>> assignments_by_record_;
};

// Builds a fresh project: records in upload order, pre-labels recorded as
// pre_labeled annotations by `creator` with the record already labeled, and
// the vocabulary fitted over every record text. Inputs must already have
// passed validate_project_config.
ProjectState create_project_state(ProjectId id, std::string name, std::string description,
                                  const std::vector<LabelSpec>& labels, ProjectSettings settings,
                                  const std::vector<UploadRow>& rows, const Coder& creator,
                                  TimePoint now, std::optional<std::string> codebook = std::nullopt);

}  // namespace labelforge
