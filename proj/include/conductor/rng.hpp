#pragma once

#include <cstdint>

namespace conductor {

// Seedable splitmix64 stream. Independent streams are derived from the same
// seed by a stream index (stream 0: chain priorities, stream 1: change
// points, stream 2: driver interleaving choices).
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed, std::uint64_t stream = 0)
      : state_(mix(seed + 0x9e3779b97f4a7c15ull * (stream + 1))) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Unbiased value in [0, bound) via rejection sampling.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = ~0ull - (~0ull % bound);
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return v % bound;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace conductor
