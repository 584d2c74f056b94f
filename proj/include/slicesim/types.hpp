#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <ostream>

namespace slicesim {

/// Simulation time in integer microseconds.
using Micros = std::int64_t;

constexpr Micros kMicrosPerMs = 1000;
constexpr Micros kMicrosPerSecond = 1'000'000;

template <typename Tag, typename Rep>
struct StrongId {
  Rep value{};

  constexpr StrongId() = default;
  constexpr explicit StrongId(Rep v) : value(v) {}

  friend constexpr auto operator<=>(const StrongId&, const StrongId&) = default;
  friend std::ostream& operator<<(std::ostream& os, const StrongId& id) {
    return os << +id.value;
  }
};

/// Network slice identifier broadcast in system information (sNetID).
using SliceNetId = StrongId<struct SliceNetIdTag, std::uint16_t>;
using NodeId = StrongId<struct NodeIdTag, std::uint32_t>;
using FlowId = StrongId<struct FlowIdTag, std::uint32_t>;

enum class SliceKind { vertical, horizontal };

}  // namespace slicesim

template <typename Tag, typename Rep>
struct std::hash<slicesim::StrongId<Tag, Rep>> {
  std::size_t operator()(const slicesim::StrongId<Tag, Rep>& id) const noexcept {
    return std::hash<Rep>{}(id.value);
  }
};
