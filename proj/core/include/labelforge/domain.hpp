#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "labelforge/ids.hpp"

namespace labelforge {

// UTC wall-clock time at millisecond resolution.
using TimePoint = std::chrono::sys_time<std::chrono::milliseconds>;

inline TimePoint now_utc() {
  return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

enum class AlMethod { random, least_confident, margin, entropy };

std::string_view to_string(AlMethod method);
std::optional<AlMethod> parse_al_method(std::string_view text);

struct ProjectSettings {
  int batch_size = 30;
  AlMethod al_method = AlMethod::least_confident;
  // Off means no model is trained: batches are random, model metrics stay
  // empty and the model export is unavailable.
  bool al_enabled = true;
  bool irr_enabled = false;
  int irr_overlap_percent = 10;
  int irr_coder_count = 2;
  int lease_ttl_seconds = 900;
  int max_vocabulary = 50000;
  int cv_folds = 5;
  double l2_lambda = 1e-4;
};

struct LabelClass {
  LabelId id;
  std::string name;
  std::string description;
};

struct Project {
  ProjectId id;
  std::string name;
  std::string description;
  ProjectSettings settings;
  std::optional<std::string> codebook;  // opaque PDF bytes
  TimePoint created_at{};
};

enum class RecordStatus {
  unlabeled,
  in_batch,
  assigned,
  labeled,
  pending_skip_adjudication,
  pending_irr_adjudication,
  discarded,
};

std::string_view to_string(RecordStatus status);

struct Record {
  RecordId id;
  std::optional<std::string> external_id;
  std::string text;
  RecordStatus status = RecordStatus::unlabeled;
  std::uint64_t upload_order = 0;
  bool double_coded = false;
  int batch_index = -1;
  std::optional<LabelId> final_label;
  // Annotation that fixed final_label (last unanimous vote, adjudication,
  // admin label or pre-label).
  std::optional<AnnotationId> deciding_annotation;
};

enum class Role { admin, coder };

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view text);

struct Coder {
  CoderId id;
  std::string username;
  Role role = Role::coder;
};

enum class AnnotationSource { coder, admin_adjudication, pre_labeled };

std::string_view to_string(AnnotationSource source);

struct Annotation {
  AnnotationId id;
  RecordId record_id;
  CoderId coder_id;
  LabelId label_id;
  std::int64_t elapsed_ms = 0;
  AnnotationSource source = AnnotationSource::coder;
  TimePoint created_at{};
  bool superseded = false;
};

// ---- record lifecycle -------------------------------------------------------

enum class RecordEvent {
  select_into_batch,
  assign,
  label,
  skip,
  discard,
  irr_conflict,
  adjudicate,
  lease_expired,
};

std::string_view to_string(RecordEvent event);

// Returns the successor state, or nullopt when the machine has no such edge.
std::optional<RecordStatus> next_status(RecordStatus current, RecordEvent event) noexcept;

// Throws Error(illegal_transition) when the edge does not exist; the record is
// left untouched in that case.
RecordStatus transition_record_status(Record& record, RecordEvent event);

constexpr bool is_terminal(RecordStatus s) { return s == RecordStatus::discarded; }

// ---- permissions ------------------------------------------------------------

enum class Action {
  annotate,
  view_history,
  admin_label,
  resolve_skips,
  discard,
  adjudicate_irr,
  view_dashboard,
  export_data,
  edit_settings,
};

inline constexpr Action kAllActions[] = {
    Action::annotate,       Action::view_history,   Action::admin_label,
    Action::resolve_skips,  Action::discard,        Action::adjudicate_irr,
    Action::view_dashboard, Action::export_data,    Action::edit_settings,
};

std::string_view to_string(Action action);
std::optional<Action> parse_action(std::string_view text);

bool check_permission(Role role, Action action) noexcept;
// Unknown action names are denied.
bool check_permission(Role role, std::string_view action) noexcept;

// ---- project validation -----------------------------------------------------

struct LabelSpec {
  std::string name;
  std::string description;
};

struct UploadRow {
  std::optional<std::string> external_id;
  std::string text;
  std::optional<std::string> pre_label;
  std::uint64_t upload_order = 0;
};

// Collects every violated creation rule. An empty result means the project can
// be created.
std::vector<std::string> validate_project_config(std::string_view name,
                                                 const std::vector<LabelSpec>& labels,
                                                 const ProjectSettings& settings,
                                                 const std::vector<UploadRow>& rows);

std::vector<std::string> validate_settings(const ProjectSettings& settings);

}  // namespace labelforge
