#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <type_traits>

namespace autothink {

// Stable 64-bit hash for identifiers. std::hash is not stable across
// standard library implementations, so stream derivation uses FNV-1a.
inline std::uint64_t stable_hash(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t combine_keys(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a ^ mix64(b));
}

// Deterministic random stream. Engine is std::mt19937_64; conversions to
// real numbers are done here because the std distributions are
// implementation-defined and would break cross-toolchain replay.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(mix64(seed)) {}

  template <typename... Keys>
  static RngStream derive(std::uint64_t seed, Keys... keys) {
    std::uint64_t k = mix64(seed);
    ((k = combine_keys(k, key_of(keys))), ...);
    return RngStream(k);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

 private:
  static std::uint64_t key_of(std::string_view s) { return stable_hash(s); }
  static std::uint64_t key_of(const char* s) { return stable_hash(s); }
  template <typename I>
    requires std::is_integral_v<I>
  static std::uint64_t key_of(I i) {
    return static_cast<std::uint64_t>(i);
  }

  std::mt19937_64 engine_;
};

}  // namespace autothink
