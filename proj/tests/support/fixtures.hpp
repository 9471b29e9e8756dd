#pragma once

#include <string>
#include <vector>

#include "labelforge/coordinator.hpp"
#include "labelforge/project_state.hpp"

namespace lftest {

using namespace labelforge;
using namespace std::chrono_literals;

inline TimePoint t0() { return TimePoint{std::chrono::milliseconds{1'700'000'000'000}}; }

inline Coder admin_user() { return Coder{CoderId{1}, "admin", Role::admin}; }
inline Coder coder_user(std::uint64_t n) { return Coder{CoderId{100 + n}, "coder" + std::to_string(n), Role::coder}; }

// Texts drawn from two disjoint word pools so the classes are learnable.
inline std::string synthetic_text(int i, bool positive) {
  static const char* pos[] = {"great", "happy", "love", "excellent", "sunny", "bright", "joy", "wonderful"};
  static const char* neg[] = {"awful", "sad", "hate", "terrible", "rainy", "dark", "grim", "dreadful"};
  const char** pool = positive ? pos : neg;
  std::string text = "item" + std::to_string(i);
  for (int k = 0; k < 4; ++k) text += std::string(" ") + pool[(i * 7 + k * 3) % 8];
  return text;
}

struct StateOptions {
  int records = 20;
  ProjectSettings settings{};
  // Pre-labels for the first records, by label name.
  std::vector<std::string> pre_labels;
  std::vector<std::string> labels{"neg", "pos"};
};

inline ProjectState make_state(const StateOptions& o, std::vector<Coder> members = {}) {
  std::vector<LabelSpec> labels;
  for (const auto& l : o.labels) labels.push_back({l, ""});
  std::vector<UploadRow> rows;
  for (int i = 0; i < o.records; ++i) {
    UploadRow r;
    r.external_id = "ext" + std::to_string(i);
    r.text = synthetic_text(i, i % 2 == 1);
    r.upload_order = static_cast<std::uint64_t>(i);
    if (static_cast<std::size_t>(i) < o.pre_labels.size() && !o.pre_labels[i].empty()) r.pre_label = o.pre_labels[i];
    rows.push_back(std::move(r));
  }
  auto state = create_project_state(ProjectId{1}, "Test project", "", labels, o.settings, rows, admin_user(), t0());
  for (const auto& m : members) state.members.push_back(m);
  return state;
}

inline LabelId label_id(const ProjectState& s, const std::string& name) { return s.find_label(name)->id; }

}  // namespace lftest
