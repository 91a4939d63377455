#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "emgrl/rng.hpp"

namespace emgrl {

inline constexpr int kNumMovements = 13;
inline constexpr int kActionBits = 7;
inline constexpr int kNumDofs = 3;

// Bit order of a movement vector: per DOF (Thumb, Index, Middle) the
// extension bit precedes the flexion bit, Rest is last.
enum class ActionBit : int {
  kThumbExt = 0,
  kThumbFlex = 1,
  kIndexExt = 2,
  kIndexFlex = 3,
  kMiddleExt = 4,
  kMiddleFlex = 5,
  kRest = 6,
};

class MovementId {
 public:
  // Throws std::out_of_range outside [0, 12].
  explicit MovementId(int index);

  static MovementId rest() { return MovementId(0); }

  int index() const { return index_; }
  bool is_rest() const { return index_ == 0; }
  std::string_view name() const;

  friend auto operator<=>(const MovementId&, const MovementId&) = default;

 private:
  int index_;
};

// A 7-bit multi-label action. Any bit pattern is representable; only 13 of
// them are canonical encodings of a MovementId.
class MovementVector {
 public:
  constexpr MovementVector() = default;
  static MovementVector from_mask(std::uint8_t mask);
  static MovementVector from_bits(const std::array<int, kActionBits>& bits);

  bool operator[](int bit) const { return (mask_ >> bit) & 1U; }
  bool test(ActionBit bit) const { return (*this)[static_cast<int>(bit)]; }
  void set(int bit, bool value);

  std::uint8_t mask() const { return mask_; }
  std::array<int, kActionBits> bits() const;
  int popcount() const;

  friend bool operator==(const MovementVector&, const MovementVector&) = default;

 private:
  std::uint8_t mask_ = 0;
};

enum class DofState { kInactive, kExtend, kFlex, kConflict };

struct DecodedMovement {
  std::optional<MovementId> id;  // empty when the vector is non-canonical
  std::array<DofState, kNumDofs> dofs{};
  bool rest_bit = false;

  bool canonical() const { return id.has_value(); }
};

MovementVector encode(MovementId id);
DecodedMovement decode(MovementVector v);

// Maps non-canonical vectors to a displayable movement: conflicting DOFs
// are dropped and an empty result becomes Rest. Canonical vectors map to
// themselves.
MovementId canonicalize(MovementVector v);

MovementId uniform_random_movement(Rng& rng);

std::string to_string(MovementVector v);

}  // namespace emgrl
