#pragma once

#include <cstdint>

namespace stablereg {

/// Counter-based generator: draw i of stream `seed` is a pure function of (seed, i).
/// Built on the SplitMix64 finalizer, so output is identical on every platform.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept { return mix(seed_ * 0xD1B54A32D192ED03ULL + (++counter_) * 0x9E3779B97F4A7C15ULL); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Independent stream for a sub-task (component, block, ...).
  RandomSource derive(std::uint64_t tag) const noexcept { return RandomSource(mix(seed_ ^ mix(tag + 0x632BE59BD9B4E019ULL))); }

 private:
  static std::uint64_t mix(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace stablereg
