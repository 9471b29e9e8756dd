#include "labelforge/domain.hpp"

#include <set>
#include <sstream>
#include <unordered_set>

#include "labelforge/error.hpp"

namespace labelforge {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::permission_denied: return "permission_denied";
    case ErrorCode::unauthenticated: return "unauthenticated";
    case ErrorCode::illegal_transition: return "illegal_transition";
    case ErrorCode::precondition_failed: return "precondition_failed";
    case ErrorCode::payload_too_large: return "payload_too_large";
    case ErrorCode::internal: return "internal";
  }
  return "internal";
}

std::string_view to_string(AlMethod method) {
  switch (method) {
    case AlMethod::random: return "random";
    case AlMethod::least_confident: return "least_confident";
    case AlMethod::margin: return "margin";
    case AlMethod::entropy: return "entropy";
  }
  return "random";
}

std::optional<AlMethod> parse_al_method(std::string_view text) {
  for (auto m : {AlMethod::random, AlMethod::least_confident, AlMethod::margin, AlMethod::entropy})
    if (to_string(m) == text) return m;
  return std::nullopt;
}

std::string_view to_string(RecordStatus status) {
  switch (status) {
    case RecordStatus::unlabeled: return "unlabeled";
    case RecordStatus::in_batch: return "in_batch";
    case RecordStatus::assigned: return "assigned";
    case RecordStatus::labeled: return "labeled";
    case RecordStatus::pending_skip_adjudication: return "pending_skip_adjudication";
    case RecordStatus::pending_irr_adjudication: return "pending_irr_adjudication";
    case RecordStatus::discarded: return "discarded";
  }
  return "unlabeled";
}

std::string_view to_string(Role role) { return role == Role::admin ? "admin" : "coder"; }

std::optional<Role> parse_role(std::string_view text) {
  if (text == "admin") return Role::admin;
  if (text == "coder") return Role::coder;
  return std::nullopt;
}

std::string_view to_string(AnnotationSource source) {
  switch (source) {
    case AnnotationSource::coder: return "coder";
    case AnnotationSource::admin_adjudication: return "admin_adjudication";
    case AnnotationSource::pre_labeled: return "pre_labeled";
  }
  return "coder";
}

std::string_view to_string(RecordEvent event) {
  switch (event) {
    case RecordEvent::select_into_batch: return "select_into_batch";
    case RecordEvent::assign: return "assign";
    case RecordEvent::label: return "label";
    case RecordEvent::skip: return "skip";
    case RecordEvent::discard: return "discard";
    case RecordEvent::irr_conflict: return "irr_conflict";
    case RecordEvent::adjudicate: return "adjudicate";
    case RecordEvent::lease_expired: return "lease_expired";
  }
  return "label";
}

std::optional<RecordStatus> next_status(RecordStatus current, RecordEvent event) noexcept {
  using S = RecordStatus;
  using E = RecordEvent;
  if (current == S::discarded) return std::nullopt;
  if (event == E::discard) return S::discarded;

  switch (current) {
    case S::unlabeled:
      if (event == E::select_into_batch) return S::in_batch;
      if (event == E::label) return S::labeled;  // admin labeling outside a batch
      break;
    case S::in_batch:
      if (event == E::assign) return S::assigned;
      if (event == E::label) return S::labeled;  // admin labeling inside the open batch
      break;
    case S::assigned:
      switch (event) {
        case E::assign: return S::assigned;  // further coders on a double-coded record
        case E::label: return S::labeled;
        case E::skip: return S::pending_skip_adjudication;
        case E::irr_conflict: return S::pending_irr_adjudication;
        case E::lease_expired: return S::in_batch;
        default: break;
      }
      break;
    case S::pending_skip_adjudication:
    case S::pending_irr_adjudication:
      if (event == E::adjudicate) return S::labeled;
      break;
    case S::labeled:
    case S::discarded:
      break;
  }
  return std::nullopt;
}

RecordStatus transition_record_status(Record& record, RecordEvent event) {
  auto next = next_status(record.status, event);
  if (!next) {
    std::ostringstream msg;
    msg << "illegal transition: " << to_string(event) << " on " << to_string(record.status)
        << " record " << to_string(record.id);
    throw Error(ErrorCode::illegal_transition, msg.str());
  }
  record.status = *next;
  return *next;
}

std::string_view to_string(Action action) {
  switch (action) {
    case Action::annotate: return "annotate";
    case Action::view_history: return "view_history";
    case Action::admin_label: return "admin_label";
    case Action::resolve_skips: return "resolve_skips";
    case Action::discard: return "discard";
    case Action::adjudicate_irr: return "adjudicate_irr";
    case Action::view_dashboard: return "view_dashboard";
    case Action::export_data: return "export";
    case Action::edit_settings: return "edit_settings";
  }
  return "";
}

std::optional<Action> parse_action(std::string_view text) {
  for (auto a : kAllActions)
    if (to_string(a) == text) return a;
  return std::nullopt;
}

bool check_permission(Role role, Action action) noexcept {
  if (role == Role::admin) return true;
  return action == Action::annotate || action == Action::view_history;
}

bool check_permission(Role role, std::string_view action) noexcept {
  auto parsed = parse_action(action);
  return parsed && check_permission(role, *parsed);
}

std::vector<std::string> validate_settings(const ProjectSettings& s) {
  std::vector<std::string> errors;
  if (s.batch_size < 1) errors.emplace_back("batch_size must be at least 1");
  if (s.irr_overlap_percent < 0 || s.irr_overlap_percent > 100)
    errors.emplace_back("irr_overlap_percent must be within 0..100");
  if (s.irr_coder_count < 2) errors.emplace_back("irr_coder_count must be at least 2");
  if (s.irr_enabled && s.irr_overlap_percent < 1)
    errors.emplace_back("irr_overlap_percent must be at least 1 when IRR is enabled");
  if (s.irr_enabled && s.batch_size < s.irr_coder_count)
    errors.emplace_back("batch_size must be at least irr_coder_count when IRR is enabled");
  if (s.lease_ttl_seconds < 1) errors.emplace_back("lease_ttl_seconds must be positive");
  if (s.max_vocabulary < 1) errors.emplace_back("max_vocabulary must be positive");
  if (s.cv_folds < 2) errors.emplace_back("cv_folds must be at least 2");
  if (!(s.l2_lambda >= 0.0)) errors.emplace_back("l2_lambda must be non-negative");
  return errors;
}

std::vector<std::string> validate_project_config(std::string_view name,
                                                 const std::vector<LabelSpec>& labels,
                                                 const ProjectSettings& settings,
                                                 const std::vector<UploadRow>& rows) {
  std::vector<std::string> errors;
  if (name.find_first_not_of(" \t\r\n") == std::string_view::npos)
    errors.emplace_back("empty project name");

  if (labels.size() < 2) errors.emplace_back("fewer than 2 label classes");
  std::set<std::string> seen;
  for (const auto& label : labels) {
    if (label.name.empty()) {
      errors.emplace_back("empty label name");
      continue;
    }
    if (!seen.insert(label.name).second) errors.push_back("duplicate label name '" + label.name + "'");
  }

  auto setting_errors = validate_settings(settings);
  errors.insert(errors.end(), setting_errors.begin(), setting_errors.end());

  if (rows.empty()) errors.emplace_back("no data rows");
  for (const auto& row : rows) {
    if (row.pre_label && !seen.count(*row.pre_label))
      errors.push_back("unknown pre-label '" + *row.pre_label + "' on row " +
                       std::to_string(row.upload_order + 1));
  }
  return errors;
}

}  // namespace labelforge
