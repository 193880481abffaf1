// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#include "degf/rng.hpp"

namespace degf {

std::uint64_t stable_hash(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  SplitMix64 finalizer(h);
  return finalizer.next();
}

}  // namespace degf
