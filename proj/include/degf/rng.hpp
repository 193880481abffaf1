// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

/**
 * Reproducible random streams.
 *
 * xoshiro256** 1.0 (Blackman & Vigna) seeded through SplitMix64, the seeding
 * procedure recommended by its authors. Both generators have published
 * reference outputs that are pinned in the unit tests, so a trace recorded
 * here can be replayed by any other implementation of the same generators.
 */

#include <array>
#include <cstdint>
#include <string_view>

namespace degf {

class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) : state_(seed) {}

  constexpr std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

class Xoshiro256StarStar {
 public:
  using State = std::array<std::uint64_t, 4>;

  explicit constexpr Xoshiro256StarStar(State state) : s_(state) {}

  static constexpr Xoshiro256StarStar from_seed(std::uint64_t seed) {
    SplitMix64 sm(seed);
    State s{};
    for (auto& word : s) word = sm.next();
    return Xoshiro256StarStar(s);
  }

  constexpr std::uint64_t next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1) from the top 53 bits.
  constexpr double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  constexpr const State& state() const { return s_; }

  friend constexpr bool operator==(const Xoshiro256StarStar&, const Xoshiro256StarStar&) = default;

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  State s_;
};

/// FNV-1a over bytes followed by a SplitMix64 finalizer. Stable across
/// platforms; used for derived seeds and content digests, not for security.
std::uint64_t stable_hash(std::string_view bytes, std::uint64_t seed = 0);

/// Combines two 64-bit values into one (order-sensitive).
constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  SplitMix64 sm(a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2)));
  return sm.next();
}

}  // namespace degf
