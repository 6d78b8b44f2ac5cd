#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace geotext {

/// splitmix64 finalizer; used for seed derivation and feature hashing.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  return mix64(h ^ (v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2)));
}

/// FNV-1a over a byte string.
constexpr std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Named random streams. Every component draws from
/// `derive_seed(run_seed, stream)` so it can be run in isolation with the
/// same numbers it sees inside the pipeline.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kMasking = 2;
inline constexpr std::uint64_t kShuffle = 3;
inline constexpr std::uint64_t kSynth = 4;
inline constexpr std::uint64_t kInitFresh = 5;  // tables re-initialized on text-checkpoint import
inline constexpr std::uint64_t kHeldout = 6;    // held-out documents and their masking
}  // namespace stream

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_id) {
  return mix64(mix64(seed) ^ mix64(stream_id * 0xD1B54A32D192ED03ULL));
}

/// Portable random source: mt19937_64's output sequence is fixed by the
/// standard, but the std distributions are not, so the conversions live here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  /// Uniform integer in [lo, hi].
  long range(long lo, long hi) { return lo + static_cast<long>(below(static_cast<std::uint64_t>(hi - lo + 1))); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (second value discarded for simplicity of state).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Normal(0, sigma) truncated to +-2 sigma by resampling.
  double truncated_normal(double sigma) {
    for (;;) {
      const double z = normal();
      if (std::abs(z) <= 2.0) return z * sigma;
    }
  }

  template <class It>
  void shuffle(It first, It last) {
    const auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
      const auto j = static_cast<decltype(i)>(below(static_cast<std::uint64_t>(i + 1)));
      std::swap(first[i], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace geotext
