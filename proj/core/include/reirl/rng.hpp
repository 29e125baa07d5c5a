#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace reirl {

/// Deterministic, platform-independent pseudo-random primitives.
///
/// Standard-library distributions are implementation-defined, so everything
/// that must be bit-reproducible (synthetic data, samplers) is built on a
/// SplitMix64 core with explicit transforms.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a, used both for seed-stream derivation and config hashing.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// A named substream of a root seed. Streams with distinct names or indices
/// are statistically independent; the derivation is pure so a stream can be
/// re-created anywhere (per-draw counter-based seeding).
class SeedStream {
public:
  explicit SeedStream(std::uint64_t root) : state_(mix(root)) {}
  SeedStream(std::uint64_t root, std::string_view name)
      : state_(mix(root ^ fnv1a64(name))) {}
  SeedStream(std::uint64_t root, std::string_view name, std::uint64_t index)
      : state_(mix((root ^ fnv1a64(name)) + 0x632be59bd9b4e019ULL * (index + 1))) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform double in [0, 1).
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (two uniforms per draw, no cached state).
  double next_normal() {
    double u1 = next_unit();
    double u2 = next_unit();
    // Guard against log(0).
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Exponential with unit rate.
  double next_exponential() {
    double u = next_unit();
    if (u >= 1.0) u = 1.0 - 0x1.0p-53;
    return -std::log1p(-u);
  }

private:
  static std::uint64_t mix(std::uint64_t x) {
    std::uint64_t s = x;
    return splitmix64(s);
  }
  std::uint64_t state_;
};

}  // namespace reirl
