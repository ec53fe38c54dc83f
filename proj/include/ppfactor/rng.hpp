#pragma once

#include <cstdint>
#include <random>

namespace ppfactor {

using Rng = std::mt19937_64;

// Independent stream `stream` derived from a user seed.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x70706661u};
  return Rng(seq);
}

// Draws a child seed; used to hand sub-stages their own reproducible streams.
inline std::uint64_t child_seed(Rng& rng) { return rng(); }

}  // namespace ppfactor
