#pragma once

#include <compare>
#include <cstdint>
#include <functional>

namespace card {

// Handle into the cache arena. Handles are invalidated by compaction.
struct NodeId {
  static constexpr std::uint32_t kNone = 0xffffffffU;

  std::uint32_t value = kNone;

  constexpr NodeId() = default;
  constexpr explicit NodeId(std::uint32_t v) : value(v) {}

  static constexpr NodeId none() { return NodeId(); }
  constexpr bool valid() const { return value != kNone; }
  constexpr std::size_t index() const { return value; }

  friend constexpr auto operator<=>(NodeId, NodeId) = default;
};

}  // namespace card

template <>
struct std::hash<card::NodeId> {
  std::size_t operator()(card::NodeId id) const noexcept { return std::hash<std::uint32_t>{}(id.value); }
};
