#include "labelforge/coordinator.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "labelforge/error.hpp"

namespace labelforge {

std::string_view to_string(SubmitOutcome outcome) {
  switch (outcome) {
    case SubmitOutcome::finalized: return "finalized";
    case SubmitOutcome::awaiting_coders: return "awaiting_coders";
    case SubmitOutcome::conflict_queued: return "conflict_queued";
  }
  return "finalized";
}

namespace {

double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + (v[hi] - v[lo]) * frac;
}

}  // namespace

BoxPlot box_plot(std::vector<double> sample) {
  BoxPlot b;
  if (sample.empty()) return b;
  std::sort(sample.begin(), sample.end());
  b.count = sample.size();
  b.minimum = sample.front();
  b.maximum = sample.back();
  b.q1 = quantile_sorted(sample, 0.25);
  b.median = quantile_sorted(sample, 0.5);
  b.q3 = quantile_sorted(sample, 0.75);
  const double iqr = b.q3 - b.q1;
  const double low_fence = b.q1 - 1.5 * iqr, high_fence = b.q3 + 1.5 * iqr;
  b.lower_whisker = b.q1;
  b.upper_whisker = b.q3;
  bool have_low = false, have_high = false;
  for (double v : sample) {
    if (v < low_fence || v > high_fence) {
      b.outliers.push_back(v);
      continue;
    }
    if (!have_low) {
      b.lower_whisker = v;
      have_low = true;
    }
    b.upper_whisker = v;
    have_high = true;
  }
  if (!have_high) b.upper_whisker = b.q3;
  return b;
}

namespace workflow {
namespace {

void require_member(const ProjectState& s, const Coder& coder) {
  if (!s.is_member(coder.id))
    throw Error(ErrorCode::permission_denied, "user " + coder.username + " is not a member of this project");
}

void require(const ProjectState& s, const Coder& coder, Action action) {
  require_member(s, coder);
  if (!check_permission(coder.role, action))
    throw Error(ErrorCode::permission_denied,
                "role " + std::string(to_string(coder.role)) + " may not " + std::string(to_string(action)));
}

Record& record_or_throw(ProjectState& s, RecordId id) {
  Record* r = s.find_record(id);
  if (!r) throw Error(ErrorCode::not_found, "unknown record " + to_string(id));
  return *r;
}

const LabelClass& label_or_throw(const ProjectState& s, LabelId id) {
  const LabelClass* l = s.find_label(id);
  if (!l) throw Error(ErrorCode::invalid_argument, "label " + to_string(id) + " is not part of this project");
  return *l;
}

Assignment& assignment_or_throw(ProjectState& s, AssignmentId id) {
  Assignment* a = s.find_assignment(id);
  if (!a) throw Error(ErrorCode::not_found, "unknown assignment " + to_string(id));
  return *a;
}

bool lease_holding(const Assignment& a) {
  return a.resolution == AssignmentResolution::pending || a.resolution == AssignmentResolution::labeled;
}

std::size_t active_assignments(const ProjectState& s, RecordId id, std::optional<AssignmentId> excluding = {}) {
  std::size_t n = 0;
  for (auto idx : s.assignments_of(id)) {
    const auto& a = s.assignments[idx];
    if (excluding && a.id == *excluding) continue;
    n += lease_holding(a);
  }
  return n;
}

bool coder_touched(const ProjectState& s, RecordId record, CoderId coder) {
  for (auto idx : s.annotations_of(record))
    if (s.annotations[idx].coder_id == coder) return true;
  // Records a coder skipped stay out of that coder's queue.
  for (auto idx : s.assignments_of(record)) {
    const auto& a = s.assignments[idx];
    if (a.coder_id == coder && a.resolution == AssignmentResolution::skipped) return true;
  }
  return false;
}

std::vector<const Annotation*> live_coder_votes(const ProjectState& s, RecordId record) {
  std::vector<const Annotation*> out;
  for (auto idx : s.annotations_of(record)) {
    const auto& a = s.annotations[idx];
    if (!a.superseded && a.source == AnnotationSource::coder) out.push_back(&a);
  }
  return out;
}

void cancel_pending(ProjectState& s, RecordId record, TimePoint now) {
  for (auto idx : s.assignments_of(record)) {
    auto& a = s.assignments[idx];
    if (a.resolution == AssignmentResolution::pending) {
      a.resolution = AssignmentResolution::expired;
      a.resolved_at = now;
    }
  }
}

// Supersedes any live annotation by `coder` on `record` so the (record, coder)
// pair keeps at most one live annotation.
void supersede_existing(ProjectState& s, RecordId record, CoderId coder) {
  for (auto idx : s.annotations_of(record)) {
    auto& a = s.annotations[idx];
    if (a.coder_id == coder && !a.superseded) a.superseded = true;
  }
}

AnnotationId add_annotation(ProjectState& s, RecordId record, CoderId coder, LabelId label, std::int64_t elapsed,
                            AnnotationSource source, TimePoint now) {
  AnnotationId id{s.allocate_id()};
  s.append_annotation(Annotation{id, record, coder, label, std::max<std::int64_t>(elapsed, 0), source, now, false});
  return id;
}

std::string username_of(const ProjectState& s, CoderId id) {
  if (const auto* m = s.find_member(id)) return m->username;
  return to_string(id);
}

}  // namespace

std::optional<ServedRecord> next_assignment(ProjectState& s, const Coder& coder, TimePoint now) {
  require(s, coder, Action::annotate);
  const Batch* batch = s.open_batch();
  if (!batch) return std::nullopt;

  auto serve = [&](const Assignment& a) {
    const Record* r = s.find_record(a.record_id);
    return ServedRecord{a, r->id, r->text, r->double_coded};
  };

  // Idempotent while the lease holds.
  for (auto rid : batch->record_ids) {
    for (auto idx : s.assignments_of(rid)) {
      const auto& a = s.assignments[idx];
      if (a.coder_id == coder.id && a.resolution == AssignmentResolution::pending && a.lease_expires_at >= now)
        return serve(a);
    }
  }

  std::vector<const Record*> members;
  members.reserve(batch->record_ids.size());
  for (auto rid : batch->record_ids) members.push_back(s.find_record(rid));
  std::sort(members.begin(), members.end(),
            [](const Record* a, const Record* b) { return a->upload_order < b->upload_order; });

  for (const Record* r : members) {
    if (r->status != RecordStatus::in_batch && r->status != RecordStatus::assigned) continue;
    if (coder_touched(s, r->id, coder.id)) continue;
    // A lapsed lease of this coder still occupies a slot until swept; it is
    // not reissued to the same coder.
    bool own_lapsed = false;
    for (auto idx : s.assignments_of(r->id)) {
      const auto& a = s.assignments[idx];
      own_lapsed |= a.coder_id == coder.id && a.resolution == AssignmentResolution::pending;
    }
    if (own_lapsed) continue;
    if (active_assignments(s, r->id) >= s.capacity(*r)) continue;

    Record& rec = *s.find_record(r->id);
    transition_record_status(rec, RecordEvent::assign);
    Assignment a;
    a.id = AssignmentId{s.allocate_id()};
    a.record_id = rec.id;
    a.coder_id = coder.id;
    a.issued_at = now;
    a.displayed_at = now;
    a.lease_expires_at = now + std::chrono::seconds(s.project.settings.lease_ttl_seconds);
    s.append_assignment(a);
    return ServedRecord{a, rec.id, rec.text, rec.double_coded};
  }
  return std::nullopt;
}

SubmitResult submit_label(ProjectState& s, const Coder& coder, AssignmentId assignment_id, LabelId label,
                          TimePoint now) {
  require(s, coder, Action::annotate);
  Assignment& a = assignment_or_throw(s, assignment_id);
  if (a.coder_id != coder.id) throw Error(ErrorCode::permission_denied, "assignment belongs to another coder");
  label_or_throw(s, label);
  Record& r = record_or_throw(s, a.record_id);

  if (a.resolution == AssignmentResolution::labeled || a.resolution == AssignmentResolution::skipped)
    throw Error(ErrorCode::conflict, "assignment already resolved");
  if (a.resolution == AssignmentResolution::expired) {
    // Late submission grace: accepted while the slot was not handed to
    // someone else and the record is still open for labeling.
    bool open = r.status == RecordStatus::in_batch || r.status == RecordStatus::assigned;
    auto votes = live_coder_votes(s, r.id);
    bool voted = std::any_of(votes.begin(), votes.end(), [&](const Annotation* v) { return v->coder_id == coder.id; });
    if (!open || voted || active_assignments(s, r.id) >= s.capacity(r))
      throw Error(ErrorCode::conflict, "assignment expired and the record was reassigned or resolved");
  } else if (r.status != RecordStatus::assigned) {
    throw Error(ErrorCode::conflict, "record is no longer open for labeling");
  }

  if (r.status == RecordStatus::in_batch) transition_record_status(r, RecordEvent::assign);

  const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(now - a.displayed_at).count();
  a.resolution = AssignmentResolution::labeled;
  a.resolved_at = now;
  SubmitResult result;
  result.annotation = add_annotation(s, r.id, coder.id, label, elapsed, AnnotationSource::coder, now);

  if (!r.double_coded) {
    transition_record_status(r, RecordEvent::label);
    r.final_label = label;
    r.deciding_annotation = result.annotation;
    result.outcome = SubmitOutcome::finalized;
  } else {
    auto votes = live_coder_votes(s, r.id);
    if (votes.size() < s.capacity(r)) {
      result.outcome = SubmitOutcome::awaiting_coders;
    } else {
      bool unanimous = std::all_of(votes.begin(), votes.end(),
                                   [&](const Annotation* v) { return v->label_id == votes.front()->label_id; });
      if (unanimous) {
        transition_record_status(r, RecordEvent::label);
        r.final_label = votes.front()->label_id;
        r.deciding_annotation = result.annotation;
        result.outcome = SubmitOutcome::finalized;
      } else {
        transition_record_status(r, RecordEvent::irr_conflict);
        result.outcome = SubmitOutcome::conflict_queued;
      }
      cancel_pending(s, r.id, now);
    }
  }
  result.record_status = r.status;
  check_batch_completion(s);
  return result;
}

void skip(ProjectState& s, const Coder& coder, AssignmentId assignment_id, TimePoint now) {
  require(s, coder, Action::annotate);
  Assignment& a = assignment_or_throw(s, assignment_id);
  if (a.coder_id != coder.id) throw Error(ErrorCode::permission_denied, "assignment belongs to another coder");
  if (a.resolution != AssignmentResolution::pending) throw Error(ErrorCode::conflict, "assignment already resolved");
  Record& r = record_or_throw(s, a.record_id);
  if (!next_status(r.status, RecordEvent::skip))
    throw Error(ErrorCode::conflict, "record cannot be skipped in state " + std::string(to_string(r.status)));

  transition_record_status(r, RecordEvent::skip);
  a.resolution = AssignmentResolution::skipped;
  a.resolved_at = now;
  cancel_pending(s, r.id, now);
}

void adjudicate(ProjectState& s, const Coder& admin, RecordId record, Adjudication decision, TimePoint now) {
  Record& r = record_or_throw(s, record);
  if (r.status == RecordStatus::pending_skip_adjudication)
    require(s, admin, Action::resolve_skips);
  else if (r.status == RecordStatus::pending_irr_adjudication)
    require(s, admin, Action::adjudicate_irr);
  else {
    require(s, admin, Action::adjudicate_irr);
    throw Error(ErrorCode::conflict, "record is not awaiting adjudication");
  }

  if (decision.label) {
    label_or_throw(s, *decision.label);
    transition_record_status(r, RecordEvent::adjudicate);
    // Coder votes by other users are retained for IRR.
    supersede_existing(s, r.id, admin.id);
    r.final_label = decision.label;
    r.deciding_annotation =
        add_annotation(s, r.id, admin.id, *decision.label, 0, AnnotationSource::admin_adjudication, now);
  } else {
    transition_record_status(r, RecordEvent::discard);
  }
  cancel_pending(s, r.id, now);
  check_batch_completion(s);
}

void discard(ProjectState& s, const Coder& admin, RecordId record, TimePoint now) {
  require(s, admin, Action::discard);
  Record& r = record_or_throw(s, record);
  if (!next_status(r.status, RecordEvent::discard)) throw Error(ErrorCode::conflict, "record already discarded");
  transition_record_status(r, RecordEvent::discard);
  cancel_pending(s, r.id, now);
  check_batch_completion(s);
}

AnnotationId admin_label(ProjectState& s, const Coder& admin, RecordId record, LabelId label, TimePoint now) {
  require(s, admin, Action::admin_label);
  Record& r = record_or_throw(s, record);
  label_or_throw(s, label);
  if (r.status != RecordStatus::unlabeled && r.status != RecordStatus::in_batch)
    throw Error(ErrorCode::conflict, "record in flight (" + std::string(to_string(r.status)) + ")");

  transition_record_status(r, RecordEvent::label);
  supersede_existing(s, r.id, admin.id);
  r.final_label = label;
  r.deciding_annotation = add_annotation(s, r.id, admin.id, label, 0, AnnotationSource::admin_adjudication, now);
  cancel_pending(s, r.id, now);
  check_batch_completion(s);
  return *r.deciding_annotation;
}

Annotation modify_annotation(ProjectState& s, const Coder& coder, AnnotationId annotation_id, LabelId label,
                             TimePoint now) {
  require(s, coder, Action::view_history);
  label_or_throw(s, label);
  Annotation* old = s.find_annotation(annotation_id);
  if (!old) throw Error(ErrorCode::not_found, "unknown annotation " + to_string(annotation_id));
  if (old->coder_id != coder.id) throw Error(ErrorCode::permission_denied, "annotation belongs to another user");
  if (old->superseded) throw Error(ErrorCode::conflict, "annotation already superseded");
  if (old->source == AnnotationSource::pre_labeled)
    throw Error(ErrorCode::conflict, "pre-labeled annotations cannot be modified");

  Annotation replacement = *old;
  old->superseded = true;
  replacement.id = AnnotationId{s.allocate_id()};
  replacement.label_id = label;
  replacement.created_at = now;
  replacement.superseded = false;
  s.append_annotation(replacement);

  Record& r = record_or_throw(s, replacement.record_id);
  // Double-coded records keep the label fixed by agreement or adjudication;
  // the changed vote only shows up in IRR statistics.
  const bool decided_by_this = r.deciding_annotation && *r.deciding_annotation == annotation_id;
  if (r.status == RecordStatus::labeled && decided_by_this &&
      (!r.double_coded || replacement.source == AnnotationSource::admin_adjudication)) {
    r.final_label = label;
    r.deciding_annotation = replacement.id;
  } else if (decided_by_this) {
    r.deciding_annotation = replacement.id;
  }
  return replacement;
}

std::size_t expire_leases(ProjectState& s, TimePoint now) {
  std::size_t expired = 0;
  std::set<RecordId> touched;
  for (auto& a : s.assignments) {
    if (a.resolution == AssignmentResolution::pending && a.lease_expires_at < now) {
      a.resolution = AssignmentResolution::expired;
      a.resolved_at = now;
      touched.insert(a.record_id);
      ++expired;
    }
  }
  for (auto rid : touched) {
    Record& r = *s.find_record(rid);
    if (r.status != RecordStatus::assigned) continue;
    bool pending = false;
    for (auto idx : s.assignments_of(rid)) pending |= s.assignments[idx].resolution == AssignmentResolution::pending;
    if (!pending && live_coder_votes(s, rid).empty()) transition_record_status(r, RecordEvent::lease_expired);
  }
  return expired;
}

void update_settings(ProjectState& s, const Coder& admin, const SettingsPatch& patch) {
  require(s, admin, Action::edit_settings);
  ProjectSettings next = s.project.settings;
  if (patch.batch_size) {
    if (!s.batches.empty()) throw Error(ErrorCode::conflict, "batch_size is immutable once the first batch exists");
    next.batch_size = *patch.batch_size;
  }
  if (patch.lease_ttl_seconds) next.lease_ttl_seconds = *patch.lease_ttl_seconds;
  if (patch.irr_overlap_percent) next.irr_overlap_percent = *patch.irr_overlap_percent;
  if (patch.al_method) next.al_method = *patch.al_method;
  auto errors = validate_settings(next);
  if (!errors.empty()) throw Error(ErrorCode::invalid_argument, "invalid settings", errors);
  s.project.settings = next;
}

bool check_batch_completion(ProjectState& s) {
  Batch* b = s.open_batch();
  if (!b) return false;
  for (auto rid : b->record_ids) {
    auto st = s.find_record(rid)->status;
    if (st != RecordStatus::labeled && st != RecordStatus::discarded) return false;
  }
  b->status = BatchStatus::complete;
  return true;
}

bool needs_cycle(const ProjectState& s) {
  if (s.batches.empty()) return true;
  const auto& last = s.batches.back();
  return last.status == BatchStatus::complete && s.cycled_batch_index < last.index;
}

LabelDistribution label_distribution(const ProjectState& s) {
  LabelDistribution out;
  for (const auto& a : s.annotations) {
    if (a.superseded || a.source == AnnotationSource::pre_labeled) continue;
    ++out[username_of(s, a.coder_id)][s.find_label(a.label_id)->name];
  }
  return out;
}

std::vector<TimingStats> timing_stats(const ProjectState& s) {
  std::map<CoderId, std::vector<double>> samples;
  for (const auto& a : s.annotations)
    if (!a.superseded && a.source == AnnotationSource::coder)
      samples[a.coder_id].push_back(static_cast<double>(a.elapsed_ms));
  std::vector<TimingStats> out;
  for (auto& [coder, sample] : samples) out.push_back(TimingStats{coder, username_of(s, coder), box_plot(std::move(sample))});
  std::sort(out.begin(), out.end(), [](const TimingStats& a, const TimingStats& b) { return a.username < b.username; });
  return out;
}

HistoryPage history(const ProjectState& s, const Coder& coder, std::size_t page, std::size_t page_size) {
  require(s, coder, Action::view_history);
  std::vector<const Annotation*> mine;
  for (const auto& a : s.annotations)
    if (a.coder_id == coder.id && !a.superseded && a.source != AnnotationSource::pre_labeled) mine.push_back(&a);
  std::reverse(mine.begin(), mine.end());
  HistoryPage out;
  out.total = mine.size();
  if (page_size == 0) return out;
  for (std::size_t i = page * page_size; i < mine.size() && i < (page + 1) * page_size; ++i)
    out.items.push_back(*mine[i]);
  return out;
}

std::vector<QueueItem> skipped_queue(const ProjectState& s) {
  std::vector<QueueItem> out;
  for (const auto& r : s.records) {
    if (r.status != RecordStatus::pending_skip_adjudication) continue;
    QueueItem item{r.id, r.text, r.status, {}, {}};
    for (auto idx : s.assignments_of(r.id))
      if (s.assignments[idx].resolution == AssignmentResolution::skipped) item.skipped_by.push_back(s.assignments[idx].coder_id);
    for (const auto* v : live_coder_votes(s, r.id)) item.votes.push_back(QueueVote{v->coder_id, username_of(s, v->coder_id), v->label_id});
    out.push_back(std::move(item));
  }
  return out;
}

std::vector<QueueItem> disagreements(const ProjectState& s) {
  std::vector<QueueItem> out;
  for (const auto& r : s.records) {
    if (r.status != RecordStatus::pending_irr_adjudication) continue;
    QueueItem item{r.id, r.text, r.status, {}, {}};
    for (const auto* v : live_coder_votes(s, r.id)) item.votes.push_back(QueueVote{v->coder_id, username_of(s, v->coder_id), v->label_id});
    out.push_back(std::move(item));
  }
  return out;
}

std::vector<std::string> verify_invariants(const ProjectState& s) {
  std::vector<std::string> problems;
  auto report = [&](const Record& r, const std::string& what) {
    problems.push_back("record " + to_string(r.id) + ": " + what);
  };
  std::set<RecordId> batched;
  for (const auto& b : s.batches)
    for (auto rid : b.record_ids)
      if (!batched.insert(rid).second) problems.push_back("record " + to_string(rid) + " in two batches");

  for (const auto& r : s.records) {
    std::size_t pending = 0, holding = 0;
    std::set<CoderId> pending_coders;
    for (auto idx : s.assignments_of(r.id)) {
      const auto& a = s.assignments[idx];
      if (a.resolution == AssignmentResolution::pending) {
        ++pending;
        if (!pending_coders.insert(a.coder_id).second) report(r, "coder holds two pending assignments");
      }
      holding += lease_holding(a);
    }
    if (pending > s.capacity(r)) report(r, "more pending assignments than capacity");
    if (holding > s.capacity(r)) report(r, "more coders than capacity");
    std::map<CoderId, int> live;
    for (auto idx : s.annotations_of(r.id))
      if (!s.annotations[idx].superseded) ++live[s.annotations[idx].coder_id];
    for (auto [c, n] : live)
      if (n > 1) report(r, "coder " + to_string(c) + " has " + std::to_string(n) + " live annotations");
    if (r.status == RecordStatus::labeled && !r.final_label) report(r, "labeled without a final label");
    if (r.status == RecordStatus::assigned && pending == 0 && live_coder_votes(s, r.id).empty())
      report(r, "assigned without pending assignment or vote");
  }
  return problems;
}

}  // namespace workflow

// ---- ProjectCoordinator ---------------------------------------------------------

ProjectCoordinator::ProjectCoordinator(ProjectState state)
    : id_(state.project.id), state_(std::move(state)), clock_(now_utc) {
  state_.rebuild_indexes();
}

ProjectCoordinator::~ProjectCoordinator() { wait_idle(); }

void ProjectCoordinator::set_scheduler(Scheduler scheduler) {
  std::unique_lock lock(mutex_);
  scheduler_ = std::move(scheduler);
}

void ProjectCoordinator::set_commit_hook(CommitHook hook) {
  std::unique_lock lock(mutex_);
  hook_ = std::move(hook);
}

void ProjectCoordinator::set_clock(Clock clock) {
  std::unique_lock lock(mutex_);
  clock_ = std::move(clock);
}

ProjectState ProjectCoordinator::snapshot() const {
  std::shared_lock lock(mutex_);
  return state_;
}

template <class F>
auto ProjectCoordinator::mutate(F&& f) {
  using R = std::invoke_result_t<F, ProjectState&>;
  auto body = [&]() -> R {
    std::unique_lock lock(mutex_);
    ProjectState next = state_;
    if constexpr (std::is_void_v<R>) {
      f(next);
      if (hook_) hook_(next);
      state_ = std::move(next);
    } else {
      R result = f(next);
      if (hook_) hook_(next);
      state_ = std::move(next);
      return result;
    }
  };
  if constexpr (std::is_void_v<R>) {
    body();
    maybe_schedule_cycle();
  } else {
    R result = body();
    maybe_schedule_cycle();
    return result;
  }
}

std::optional<ServedRecord> ProjectCoordinator::next_assignment(const Coder& coder, TimePoint now) {
  {
    // Most calls on an exhausted queue change nothing; answer those under the
    // read lock when the coder has nothing to be served.
    std::shared_lock lock(mutex_);
    if (!state_.open_batch() && state_.is_member(coder.id)) return std::nullopt;
  }
  return mutate([&](ProjectState& s) { return workflow::next_assignment(s, coder, now); });
}

SubmitResult ProjectCoordinator::submit_label(const Coder& coder, AssignmentId assignment, LabelId label,
                                              TimePoint now) {
  return mutate([&](ProjectState& s) { return workflow::submit_label(s, coder, assignment, label, now); });
}

void ProjectCoordinator::skip(const Coder& coder, AssignmentId assignment, TimePoint now) {
  mutate([&](ProjectState& s) { workflow::skip(s, coder, assignment, now); });
}

void ProjectCoordinator::adjudicate(const Coder& admin, RecordId record, Adjudication decision, TimePoint now) {
  mutate([&](ProjectState& s) { workflow::adjudicate(s, admin, record, decision, now); });
}

void ProjectCoordinator::discard(const Coder& admin, RecordId record, TimePoint now) {
  mutate([&](ProjectState& s) { workflow::discard(s, admin, record, now); });
}

AnnotationId ProjectCoordinator::admin_label(const Coder& admin, RecordId record, LabelId label, TimePoint now) {
  return mutate([&](ProjectState& s) { return workflow::admin_label(s, admin, record, label, now); });
}

Annotation ProjectCoordinator::modify_annotation(const Coder& coder, AnnotationId annotation, LabelId label,
                                                 TimePoint now) {
  return mutate([&](ProjectState& s) { return workflow::modify_annotation(s, coder, annotation, label, now); });
}

std::size_t ProjectCoordinator::expire_leases(TimePoint now) {
  {
    std::shared_lock lock(mutex_);
    bool any = std::any_of(state_.assignments.begin(), state_.assignments.end(), [&](const Assignment& a) {
      return a.resolution == AssignmentResolution::pending && a.lease_expires_at < now;
    });
    if (!any) return 0;
  }
  return mutate([&](ProjectState& s) { return workflow::expire_leases(s, now); });
}

void ProjectCoordinator::update_settings(const Coder& admin, const SettingsPatch& patch) {
  mutate([&](ProjectState& s) { workflow::update_settings(s, admin, patch); });
}

void ProjectCoordinator::add_member(const Coder& coder) {
  mutate([&](ProjectState& s) {
    for (auto& m : s.members) {
      if (m.id == coder.id) {
        m = coder;
        return;
      }
    }
    s.members.push_back(coder);
  });
}

std::optional<CycleOutcome> ProjectCoordinator::run_cycle_now(TimePoint now) {
  std::lock_guard run(cycle_run_mutex_);
  CycleInput input;
  {
    std::shared_lock lock(mutex_);
    if (!workflow::needs_cycle(state_)) return std::nullopt;
    input = prepare_cycle(state_);
  }
  auto result = compute_cycle(input, now);
  return mutate([&](ProjectState& s) { return commit_cycle(s, std::move(result)); });
}

void ProjectCoordinator::maybe_schedule_cycle() {
  Scheduler scheduler;
  {
    std::shared_lock lock(mutex_);
    if (!workflow::needs_cycle(state_) || state_.batches.empty()) return;
    scheduler = scheduler_;
  }
  {
    std::lock_guard lock(cycle_mutex_);
    if (cycle_scheduled_) return;
    cycle_scheduled_ = true;
  }
  Task task = [this] { run_scheduled_cycle(); };
  if (scheduler)
    scheduler(std::move(task));
  else
    task();
}

void ProjectCoordinator::run_scheduled_cycle() {
  std::optional<std::string> error;
  try {
    Clock clock;
    {
      std::shared_lock lock(mutex_);
      clock = clock_;
    }
    run_cycle_now(clock());
  } catch (const std::exception& e) {
    error = e.what();
  }
  std::lock_guard lock(cycle_mutex_);
  cycle_scheduled_ = false;
  if (error) last_cycle_error_ = error;
  cycle_cv_.notify_all();
}

bool ProjectCoordinator::cycle_in_flight() const {
  std::lock_guard lock(cycle_mutex_);
  return cycle_scheduled_;
}

void ProjectCoordinator::wait_idle() const {
  std::unique_lock lock(cycle_mutex_);
  cycle_cv_.wait(lock, [this] { return !cycle_scheduled_; });
}

std::optional<std::string> ProjectCoordinator::last_cycle_error() const {
  std::lock_guard lock(cycle_mutex_);
  return last_cycle_error_;
}

}  // namespace labelforge
