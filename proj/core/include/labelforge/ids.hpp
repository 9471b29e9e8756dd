#pragma once

#include <charconv>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace labelforge {

// Opaque identifier tagged by the entity it names. Values are never
// interpreted by clients; the service serializes them as decimal strings.
template <class Tag>
struct Id {
  std::uint64_t value = 0;

  constexpr Id() = default;
  constexpr explicit Id(std::uint64_t v) : value(v) {}

  constexpr explicit operator bool() const { return value != 0; }
  friend constexpr auto operator<=>(const Id&, const Id&) = default;
};

using ProjectId = Id<struct ProjectTag>;
using LabelId = Id<struct LabelTag>;
using RecordId = Id<struct RecordTag>;
using CoderId = Id<struct CoderTag>;
using AnnotationId = Id<struct AnnotationTag>;
using AssignmentId = Id<struct AssignmentTag>;
using BatchId = Id<struct BatchTag>;

// Entity ids inside a project embed the project number in the high bits so
// that /records/{id} style lookups can be routed without a global index.
inline constexpr int kProjectIdShift = 40;

constexpr std::uint64_t compose_id(ProjectId project, std::uint64_t sequence) {
  return (project.value << kProjectIdShift) | sequence;
}

constexpr ProjectId project_of(std::uint64_t entity_id) {
  return ProjectId{entity_id >> kProjectIdShift};
}

template <class Tag>
std::string to_string(Id<Tag> id) {
  return std::to_string(id.value);
}

template <class IdT>
std::optional<IdT> parse_id(std::string_view text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end || v == 0) return std::nullopt;
  return IdT{v};
}

}  // namespace labelforge

template <class Tag>
struct std::hash<labelforge::Id<Tag>> {
  std::size_t operator()(labelforge::Id<Tag> id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value);
  }
};
