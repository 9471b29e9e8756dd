#pragma once

#include <condition_variable>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "labelforge/active_learning.hpp"
#include "labelforge/irr.hpp"
#include "labelforge/project_state.hpp"

namespace labelforge {

struct ServedRecord {
  Assignment assignment;
  RecordId record_id;
  std::string text;
  bool double_coded = false;
};

enum class SubmitOutcome { finalized, awaiting_coders, conflict_queued };

std::string_view to_string(SubmitOutcome outcome);

struct SubmitResult {
  SubmitOutcome outcome = SubmitOutcome::finalized;
  AnnotationId annotation;
  RecordStatus record_status = RecordStatus::labeled;
};

// nullopt label = discard.
struct Adjudication {
  std::optional<LabelId> label;
};

struct SettingsPatch {
  std::optional<int> lease_ttl_seconds;
  std::optional<int> irr_overlap_percent;
  std::optional<AlMethod> al_method;
  std::optional<int> batch_size;  // only before the first batch exists
};

// Box-plot summary of one sample. Quartiles interpolate linearly between
// order statistics (position q * (n - 1)); whiskers reach the most extreme
// observations within 1.5 IQR of the quartiles.
struct BoxPlot {
  std::size_t count = 0;
  double minimum = 0, q1 = 0, median = 0, q3 = 0, maximum = 0;
  double lower_whisker = 0, upper_whisker = 0;
  std::vector<double> outliers;  // ascending
};

BoxPlot box_plot(std::vector<double> sample);

struct TimingStats {
  CoderId coder;
  std::string username;
  BoxPlot elapsed_ms;
};

// username -> label name -> count
using LabelDistribution = std::map<std::string, std::map<std::string, std::size_t>>;

struct HistoryPage {
  std::vector<Annotation> items;  // newest first
  std::size_t total = 0;
};

struct QueueVote {
  CoderId coder;
  std::string username;
  LabelId label;
};

struct QueueItem {
  RecordId record;
  std::string text;
  RecordStatus status;
  std::vector<QueueVote> votes;       // disagreements: current coder votes
  std::vector<CoderId> skipped_by;    // skip queue
};

// ---- workflow operations on a bare state -------------------------------------
// Each throws labelforge::Error on a violated precondition. They check before
// mutating, but callers wanting strict atomicity should operate on a copy.
namespace workflow {

std::optional<ServedRecord> next_assignment(ProjectState& s, const Coder& coder, TimePoint now);
SubmitResult submit_label(ProjectState& s, const Coder& coder, AssignmentId assignment, LabelId label,
                          TimePoint now);
void skip(ProjectState& s, const Coder& coder, AssignmentId assignment, TimePoint now);
void adjudicate(ProjectState& s, const Coder& admin, RecordId record, Adjudication decision, TimePoint now);
void discard(ProjectState& s, const Coder& admin, RecordId record, TimePoint now);
AnnotationId admin_label(ProjectState& s, const Coder& admin, RecordId record, LabelId label, TimePoint now);
Annotation modify_annotation(ProjectState& s, const Coder& coder, AnnotationId annotation, LabelId label,
                             TimePoint now);
std::size_t expire_leases(ProjectState& s, TimePoint now);
void update_settings(ProjectState& s, const Coder& admin, const SettingsPatch& patch);

// Marks the open batch complete when every member is labeled or discarded.
bool check_batch_completion(ProjectState& s);
bool needs_cycle(const ProjectState& s);

LabelDistribution label_distribution(const ProjectState& s);
std::vector<TimingStats> timing_stats(const ProjectState& s);
HistoryPage history(const ProjectState& s, const Coder& coder, std::size_t page, std::size_t page_size);
std::vector<QueueItem> skipped_queue(const ProjectState& s);
std::vector<QueueItem> disagreements(const ProjectState& s);

// Structural invariants; empty when the state is consistent.
std::vector<std::string> verify_invariants(const ProjectState& s);

}  // namespace workflow

// Serializes every mutation of one project (single writer, concurrent
// readers). Mutations apply to a copy that replaces the live state only after
// the commit hook (persistence) succeeds. When the open batch completes, the
// retrain cycle is handed to the scheduler; its training step runs without the
// writer lock so reads keep seeing the previous snapshot.
class ProjectCoordinator {
 public:
  using CommitHook = std::function<void(const ProjectState&)>;
  using Task = std::function<void()>;
  using Scheduler = std::function<void(Task)>;
  using Clock = std::function<TimePoint()>;

  explicit ProjectCoordinator(ProjectState state);
  ~ProjectCoordinator();

  ProjectCoordinator(const ProjectCoordinator&) = delete;
  ProjectCoordinator& operator=(const ProjectCoordinator&) = delete;

  // Default: run inline on the calling thread once the writer lock is released.
  void set_scheduler(Scheduler scheduler);
  void set_commit_hook(CommitHook hook);
  // Time source for the cycle's trained_at stamps.
  void set_clock(Clock clock);

  ProjectId id() const { return id_; }

  template <class F>
  auto read(F&& f) const {
    std::shared_lock lock(mutex_);
    return f(static_cast<const ProjectState&>(state_));
  }
  ProjectState snapshot() const;

  std::optional<ServedRecord> next_assignment(const Coder& coder, TimePoint now);
  SubmitResult submit_label(const Coder& coder, AssignmentId assignment, LabelId label, TimePoint now);
  void skip(const Coder& coder, AssignmentId assignment, TimePoint now);
  void adjudicate(const Coder& admin, RecordId record, Adjudication decision, TimePoint now);
  void discard(const Coder& admin, RecordId record, TimePoint now);
  AnnotationId admin_label(const Coder& admin, RecordId record, LabelId label, TimePoint now);
  Annotation modify_annotation(const Coder& coder, AnnotationId annotation, LabelId label, TimePoint now);
  std::size_t expire_leases(TimePoint now);
  void update_settings(const Coder& admin, const SettingsPatch& patch);
  void add_member(const Coder& coder);

  // Runs a pending cycle synchronously (used right after project creation).
  std::optional<CycleOutcome> run_cycle_now(TimePoint now);

  bool cycle_in_flight() const;
  void wait_idle() const;
  // Message of the last failed background cycle, if any.
  std::optional<std::string> last_cycle_error() const;

 private:
  template <class F>
  auto mutate(F&& f);
  void maybe_schedule_cycle();
  void run_scheduled_cycle();

  ProjectId id_;
  mutable std::shared_mutex mutex_;
  ProjectState state_;
  CommitHook hook_;
  Scheduler scheduler_;
  Clock clock_;

  mutable std::mutex cycle_mutex_;  // guards the fields below
  mutable std::condition_variable cycle_cv_;
  bool cycle_scheduled_ = false;
  std::optional<std::string> last_cycle_error_;
  std::mutex cycle_run_mutex_;  // one cycle computation at a time
};

}  // namespace labelforge
