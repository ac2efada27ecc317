// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace flicker {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream, index). Streams let callers draw
/// per-sample randomness in any order and still get identical results.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Stream tags, one per consumer of randomness.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kAttackSample = 2;
inline constexpr std::uint64_t kEvalTransform = 3;
inline constexpr std::uint64_t kDataset = 4;
inline constexpr std::uint64_t kTraining = 5;
inline constexpr std::uint64_t kAffinity = 6;
inline constexpr std::uint64_t kBank = 7;
}  // namespace streams

}  // namespace flicker
