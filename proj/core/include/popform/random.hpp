#pragma once

#include <cstdint>
#include <random>

namespace popform {

using Rng = std::mt19937_64;

// Deterministically derives an independent sub-seed for stream `stream` of
// `base` (splitmix64 finalizer over the pair).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

inline Rng make_rng(std::uint64_t seed) { return Rng{seed}; }

}  // namespace popform
