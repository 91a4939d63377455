#include "emgrl/movements.hpp"

#include <bit>
#include <stdexcept>

namespace emgrl {
namespace {

struct MovementEntry {
  std::string_view name;
  std::uint8_t mask;
};

constexpr std::uint8_t bit(ActionBit b) { return static_cast<std::uint8_t>(1U << static_cast<int>(b)); }

constexpr std::uint8_t kTE = bit(ActionBit::kThumbExt);
constexpr std::uint8_t kTF = bit(ActionBit::kThumbFlex);
constexpr std::uint8_t kIE = bit(ActionBit::kIndexExt);
constexpr std::uint8_t kIF = bit(ActionBit::kIndexFlex);
constexpr std::uint8_t kME = bit(ActionBit::kMiddleExt);
constexpr std::uint8_t kMF = bit(ActionBit::kMiddleFlex);
constexpr std::uint8_t kR = bit(ActionBit::kRest);

// m1-m6 single DOF, m7-m10 two DOFs, m11-m12 all three. Extension variants
// take the odd index of each pair.
constexpr std::array<MovementEntry, kNumMovements> kTable{{
    {"Rest", kR},
    {"ThumbExtend", kTE},
    {"ThumbFlex", kTF},
    {"IndexExtend", kIE},
    {"IndexFlex", kIF},
    {"MiddleExtend", kME},
    {"MiddleFlex", kMF},
    {"ThumbIndexExtend", kTE | kIE},
    {"ThumbIndexFlex", kTF | kIF},
    {"IndexMiddleExtend", kIE | kME},
    {"IndexMiddleFlex", kIF | kMF},
    {"ThumbIndexMiddleExtend", kTE | kIE | kME},
    {"ThumbIndexMiddleFlex", kTF | kIF | kMF},
}};

}  // namespace

MovementId::MovementId(int index) : index_(index) {
  if (index < 0 || index >= kNumMovements) {
    throw std::out_of_range("movement id out of range: " + std::to_string(index));
  }
}

std::string_view MovementId::name() const { return kTable[static_cast<std::size_t>(index_)].name; }

MovementVector MovementVector::from_mask(std::uint8_t mask) {
  if (mask >= (1U << kActionBits)) throw std::invalid_argument("movement vector mask exceeds 7 bits");
  MovementVector v;
  v.mask_ = mask;
  return v;
}

MovementVector MovementVector::from_bits(const std::array<int, kActionBits>& bits) {
  MovementVector v;
  for (int i = 0; i < kActionBits; ++i) {
    if (bits[static_cast<std::size_t>(i)] != 0 && bits[static_cast<std::size_t>(i)] != 1) {
      throw std::invalid_argument("movement vector bits must be 0 or 1");
    }
    v.set(i, bits[static_cast<std::size_t>(i)] == 1);
  }
  return v;
}

void MovementVector::set(int b, bool value) {
  if (value) {
    mask_ = static_cast<std::uint8_t>(mask_ | (1U << b));
  } else {
    mask_ = static_cast<std::uint8_t>(mask_ & ~(1U << b));
  }
}

std::array<int, kActionBits> MovementVector::bits() const {
  std::array<int, kActionBits> out{};
  for (int i = 0; i < kActionBits; ++i) out[static_cast<std::size_t>(i)] = (*this)[i] ? 1 : 0;
  return out;
}

int MovementVector::popcount() const { return std::popcount(mask_); }

MovementVector encode(MovementId id) {
  return MovementVector::from_mask(kTable[static_cast<std::size_t>(id.index())].mask);
}

DecodedMovement decode(MovementVector v) {
  DecodedMovement out;
  out.rest_bit = v.test(ActionBit::kRest);
  for (int d = 0; d < kNumDofs; ++d) {
    const bool ext = v[2 * d];
    const bool flex = v[2 * d + 1];
    DofState s = DofState::kInactive;
    if (ext && flex) {
      s = DofState::kConflict;
    } else if (ext) {
      s = DofState::kExtend;
    } else if (flex) {
      s = DofState::kFlex;
    }
    out.dofs[static_cast<std::size_t>(d)] = s;
  }
  for (int i = 0; i < kNumMovements; ++i) {
    if (kTable[static_cast<std::size_t>(i)].mask == v.mask()) {
      out.id = MovementId(i);
      break;
    }
  }
  return out;
}

MovementId canonicalize(MovementVector v) {
  const DecodedMovement d = decode(v);
  if (d.id) return *d.id;
  std::uint8_t mask = 0;
  for (int dof = 0; dof < kNumDofs; ++dof) {
    switch (d.dofs[static_cast<std::size_t>(dof)]) {
      case DofState::kExtend: mask = static_cast<std::uint8_t>(mask | (1U << (2 * dof))); break;
      case DofState::kFlex: mask = static_cast<std::uint8_t>(mask | (1U << (2 * dof + 1))); break;
      default: break;
    }
  }
  for (int i = 1; i < kNumMovements; ++i) {
    if (kTable[static_cast<std::size_t>(i)].mask == mask) return MovementId(i);
  }
  // Surviving DOF combination has no movement of its own (e.g. thumb+middle).
  return MovementId::rest();
}

MovementId uniform_random_movement(Rng& rng) {
  std::uniform_int_distribution<int> dist(0, kNumMovements - 1);
  return MovementId(dist(rng));
}

std::string to_string(MovementVector v) {
  std::string s(kActionBits, '0');
  for (int i = 0; i < kActionBits; ++i) s[static_cast<std::size_t>(i)] = v[i] ? '1' : '0';
  return s;
}

}  // namespace emgrl
