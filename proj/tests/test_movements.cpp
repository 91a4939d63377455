#include <doctest.h>

#include <set>
#include <stdexcept>

#include "emgrl/movements.hpp"

using namespace emgrl;

namespace {

// Hand-written table, bit order [TE, TF, IE, IF, ME, MF, Rest].
const std::array<std::array<int, 7>, 13> kTable{{
    {0, 0, 0, 0, 0, 0, 1},  // rest
    {1, 0, 0, 0, 0, 0, 0},  // thumb ext
    {0, 1, 0, 0, 0, 0, 0},  // thumb flex
    {0, 0, 1, 0, 0, 0, 0},  // index ext
    {0, 0, 0, 1, 0, 0, 0},  // index flex
    {0, 0, 0, 0, 1, 0, 0},  // middle ext
    {0, 0, 0, 0, 0, 1, 0},  // middle flex
    {1, 0, 1, 0, 0, 0, 0},  // thumb + index ext
    {0, 1, 0, 1, 0, 0, 0},  // thumb + index flex
    {0, 0, 1, 0, 1, 0, 0},  // index + middle ext
    {0, 0, 0, 1, 0, 1, 0},  // index + middle flex
    {1, 0, 1, 0, 1, 0, 0},  // all ext
    {0, 1, 0, 1, 0, 1, 0},  // all flex
}};

}  // namespace

TEST_CASE("encode matches the movement table") {
  for (int m = 0; m < kNumMovements; ++m) CHECK(encode(MovementId(m)).bits() == kTable[static_cast<std::size_t>(m)]);
  CHECK(encode(MovementId(8)).bits() == std::array<int, 7>{0, 1, 0, 1, 0, 0, 0});
  CHECK(encode(MovementId(12)).bits() == std::array<int, 7>{0, 1, 0, 1, 0, 1, 0});
}

TEST_CASE("movement ids are range checked") {
  CHECK_THROWS_AS(MovementId(-1), std::out_of_range);
  CHECK_THROWS_AS(MovementId(13), std::out_of_range);
  CHECK(MovementId::rest().is_rest());
}

TEST_CASE("decode inverts encode and flags everything else") {
  int canonical = 0;
  for (int mask = 0; mask < 128; ++mask) {
    const auto v = MovementVector::from_mask(static_cast<std::uint8_t>(mask));
    const auto d = decode(v);
    if (d.canonical()) {
      ++canonical;
      CHECK(encode(*d.id) == v);
      if (!d.id->is_rest()) {
        CHECK_FALSE(v.test(ActionBit::kRest));
        CHECK(v.popcount() >= 1);
      }
    }
  }
  CHECK(canonical == 13);
  for (int m = 0; m < kNumMovements; ++m) CHECK(decode(encode(MovementId(m))).id == MovementId(m));

  const auto conflict = decode(MovementVector::from_bits({1, 1, 0, 0, 0, 0, 0}));
  CHECK_FALSE(conflict.canonical());
  CHECK(conflict.dofs[0] == DofState::kConflict);
}

TEST_CASE("canonicalize drops conflicting DOFs") {
  CHECK(canonicalize(MovementVector::from_bits({1, 1, 0, 0, 0, 0, 0})) == MovementId::rest());
  CHECK(canonicalize(MovementVector::from_bits({1, 1, 1, 0, 0, 0, 0})) == MovementId(3));
  CHECK(canonicalize(MovementVector::from_bits({0, 0, 0, 0, 0, 0, 0})) == MovementId::rest());
  CHECK(canonicalize(encode(MovementId(11))) == MovementId(11));
}

TEST_CASE("uniform_random_movement passes a chi-square test") {
  Rng rng = make_rng(5, "test-uniform");
  std::array<int, 13> counts{};
  const int n = 13000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(uniform_random_movement(rng).index())];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
  // Upper 0.001 quantile of chi-square with 12 degrees of freedom.
  CHECK(chi2 < 32.909);
  for (int c : counts) {
    CHECK(c > 1000 * (1 - 5 * 0.0797));
    CHECK(c < 1000 * (1 + 5 * 0.0797));
  }
}

TEST_CASE("random movements are reproducible per seed") {
  auto draw = [](std::uint64_t seed) {
    Rng rng = make_rng(seed, "test-uniform");
    std::vector<int> out;
    for (int i = 0; i < 50; ++i) out.push_back(uniform_random_movement(rng).index());
    return out;
  };
  CHECK(draw(1) == draw(1));
  CHECK(draw(1) != draw(2));
}
