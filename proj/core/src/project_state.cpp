#include "labelforge/project_state.hpp"

#include "labelforge/error.hpp"

namespace labelforge {

std::string_view to_string(AssignmentResolution r) {
  switch (r) {
    case AssignmentResolution::pending: return "pending";
    case AssignmentResolution::labeled: return "labeled";
    case AssignmentResolution::skipped: return "skipped";
    case AssignmentResolution::expired: return "expired";
  }
  return "pending";
}

std::string_view to_string(BatchStatus s) { return s == BatchStatus::open ? "open" : "complete"; }

void ProjectState::rebuild_indexes() {
  record_index_.clear();
  assignment_index_.clear();
  annotation_index_.clear();
  annotations_by_record_.clear();
  assignments_by_record_.clear();
  for (std::size_t i = 0; i < records.size(); ++i) record_index_[records[i].id] = i;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    assignment_index_[assignments[i].id] = i;
    assignments_by_record_[assignments[i].record_id].push_back(i);
  }
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    annotation_index_[annotations[i].id] = i;
    annotations_by_record_[annotations[i].record_id].push_back(i);
  }
}

Record* ProjectState::find_record(RecordId id) {
  auto it = record_index_.find(id);
  return it == record_index_.end() ? nullptr : &records[it->second];
}

const Record* ProjectState::find_record(RecordId id) const {
  auto it = record_index_.find(id);
  return it == record_index_.end() ? nullptr : &records[it->second];
}

std::size_t ProjectState::record_position(RecordId id) const {
  auto it = record_index_.find(id);
  if (it == record_index_.end()) throw Error(ErrorCode::not_found, "unknown record " + to_string(id));
  return it->second;
}

Assignment* ProjectState::find_assignment(AssignmentId id) {
  auto it = assignment_index_.find(id);
  return it == assignment_index_.end() ? nullptr : &assignments[it->second];
}

const Annotation* ProjectState::find_annotation(AnnotationId id) const {
  auto it = annotation_index_.find(id);
  return it == annotation_index_.end() ? nullptr : &annotations[it->second];
}

Annotation* ProjectState::find_annotation(AnnotationId id) {
  auto it = annotation_index_.find(id);
  return it == annotation_index_.end() ? nullptr : &annotations[it->second];
}

const LabelClass* ProjectState::find_label(LabelId id) const {
  for (const auto& l : labels)
    if (l.id == id) return &l;
  return nullptr;
}

const LabelClass* ProjectState::find_label(std::string_view name) const {
  for (const auto& l : labels)
    if (l.name == name) return &l;
  return nullptr;
}

const Coder* ProjectState::find_member(CoderId id) const {
  for (const auto& m : members)
    if (m.id == id) return &m;
  return nullptr;
}

Batch* ProjectState::open_batch() {
  if (batches.empty() || batches.back().status != BatchStatus::open) return nullptr;
  return &batches.back();
}

const Batch* ProjectState::open_batch() const {
  if (batches.empty() || batches.back().status != BatchStatus::open) return nullptr;
  return &batches.back();
}

void ProjectState::append_annotation(Annotation a) {
  annotation_index_[a.id] = annotations.size();
  annotations_by_record_[a.record_id].push_back(annotations.size());
  annotations.push_back(std::move(a));
}

void ProjectState::append_assignment(Assignment a) {
  assignment_index_[a.id] = assignments.size();
  assignments_by_record_[a.record_id].push_back(assignments.size());
  assignments.push_back(std::move(a));
}

const std::vector<std::size_t>& ProjectState::annotations_of(RecordId id) const {
  static const std::vector<std::size_t> kEmpty;
  auto it = annotations_by_record_.find(id);
  return it == annotations_by_record_.end() ? kEmpty : it->second;
}

const std::vector<std::size_t>& ProjectState::assignments_of(RecordId id) const {
  static const std::vector<std::size_t> kEmpty;
  auto it = assignments_by_record_.find(id);
  return it == assignments_by_record_.end() ? kEmpty : it->second;
}

void ProjectState::compute_features() {
  if (!vocabulary) throw Error(ErrorCode::precondition_failed, "vocabulary not fitted");
  auto feats = std::make_shared<std::vector<SparseVector>>();
  feats->reserve(records.size());
  for (const auto& r : records) feats->push_back(vocabulary->transform(r.text));
  features = std::move(feats);
}

ProjectState create_project_state(ProjectId id, std::string name, std::string description,
                                  const std::vector<LabelSpec>& labels, ProjectSettings settings,
                                  const std::vector<UploadRow>& rows, const Coder& creator,
                                  TimePoint now, std::optional<std::string> codebook) {
  auto errors = validate_project_config(name, labels, settings, rows);
  if (!errors.empty()) throw Error(ErrorCode::invalid_argument, "invalid project configuration", errors);

  ProjectState s;
  s.project.id = id;
  s.project.name = std::move(name);
  s.project.description = std::move(description);
  s.project.settings = settings;
  s.project.codebook = std::move(codebook);
  s.project.created_at = now;
  s.members.push_back(creator);

  for (const auto& spec : labels)
    s.labels.push_back(LabelClass{LabelId{s.allocate_id()}, spec.name, spec.description});

  std::vector<std::string> corpus;
  corpus.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    Record r;
    r.id = RecordId{s.allocate_id()};
    r.external_id = row.external_id;
    r.text = row.text;
    r.upload_order = i;
    corpus.push_back(row.text);
    s.records.push_back(std::move(r));
  }
  s.rebuild_indexes();

  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].pre_label) continue;
    auto& record = s.records[i];
    const auto* label = s.find_label(*rows[i].pre_label);
    record.status = RecordStatus::labeled;
    record.final_label = label->id;
    AnnotationId ann{s.allocate_id()};
    record.deciding_annotation = ann;
    s.append_annotation(Annotation{ann, record.id, creator.id, label->id, 0, AnnotationSource::pre_labeled, now, false});
  }

  // The feature space is fixed once over all records, labeled or not.
  if (settings.al_enabled) {
    s.vocabulary = std::make_shared<const Vocabulary>(
        Vocabulary::fit(corpus, static_cast<std::size_t>(settings.max_vocabulary)));
    s.compute_features();
  }
  return s;
}

}  // namespace labelforge
