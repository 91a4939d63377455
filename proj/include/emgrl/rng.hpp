#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace emgrl {

using Rng = std::mt19937_64;

// Independent, reproducible streams keyed by (seed, purpose, index). Every
// random draw in an experiment goes through one of these so a phase can be
// replayed in isolation from the persisted seed alone.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);
Rng make_rng(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

}  // namespace emgrl
