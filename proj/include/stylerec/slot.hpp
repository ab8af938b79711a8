/**
 * @file slot.hpp
 * @brief Functional slots: the role a product plays inside an outfit.
 */
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "stylerec/errors.hpp"

namespace stylerec {

/// Canonical order; used for file formats and attention-matrix indexing.
enum class Slot : std::uint8_t {
  shirt = 0,
  over_shirt,
  suit,
  jacket,
  belt,
  trouser,
  shoes,
  other,
};

inline constexpr std::size_t kSlotCount = 8;

inline constexpr std::array<Slot, kSlotCount> kAllSlots = {
    Slot::shirt, Slot::over_shirt, Slot::suit,    Slot::jacket,
    Slot::belt,  Slot::trouser,    Slot::shoes,   Slot::other,
};

inline constexpr std::array<std::string_view, kSlotCount> kSlotNames = {
    "shirt", "over_shirt", "suit", "jacket", "belt", "trouser", "shoes", "other",
};

constexpr std::size_t slot_index(Slot s) noexcept { return static_cast<std::size_t>(s); }

constexpr std::string_view slot_name(Slot s) noexcept { return kSlotNames[slot_index(s)]; }

inline Slot parse_slot(std::string_view name) {
  for (std::size_t i = 0; i < kSlotCount; ++i) {
    if (kSlotNames[i] == name) return kAllSlots[i];
  }
  throw UnknownSlot(std::string(name));
}

/// Bit set of slots, used to check slot collisions quickly.
class SlotSet {
 public:
  constexpr bool contains(Slot s) const noexcept { return (bits_ >> slot_index(s)) & 1U; }
  constexpr void insert(Slot s) noexcept { bits_ |= static_cast<std::uint8_t>(1U << slot_index(s)); }
  constexpr std::size_t size() const noexcept {
    std::size_t n = 0;
    for (std::uint8_t b = bits_; b != 0; b &= static_cast<std::uint8_t>(b - 1)) ++n;
    return n;
  }
  constexpr bool operator==(const SlotSet&) const noexcept = default;

 private:
  std::uint8_t bits_ = 0;
};

}  // namespace stylerec
