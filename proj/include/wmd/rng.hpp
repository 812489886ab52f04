#pragma once

// Bit-exact pseudo-random primitives. Nothing here depends on <random>
// distributions, whose output is implementation-defined.

#include <array>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <initializer_list>

namespace wmd {

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

/// SplitMix64 output finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Maps 64 random bits to the open interval (0,1); both endpoints are excluded.
constexpr double to_open_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

/// Folds a list of tags into a seed; used to carve independent streams out of
/// one master seed (e.g. master, stream id, length, repetition).
constexpr std::uint64_t derive_stream(std::uint64_t master, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = mix64(master + kGoldenGamma);
  for (std::uint64_t t : tags) h = mix64((h ^ t) + kGoldenGamma);
  return h;
}

class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) : state_(seed) {}
  constexpr std::uint64_t operator()() {
    state_ += kGoldenGamma;
    return mix64(state_);
  }

 private:
  std::uint64_t state_;
};

/// xoshiro256** seeded through SplitMix64.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr Rng(std::uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& w : s_) w = sm();
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  constexpr result_type operator()() {
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

  /// Uniform on (0,1).
  constexpr double uniform01() { return to_open_unit((*this)()); }

  /// Uniform on [lo, hi].
  constexpr double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n); Lemire's multiply-and-reject, unbiased and bit-exact.
  std::uint64_t uniform_index(std::uint64_t n) {
    std::uint64_t x = (*this)();
    __uint128_t prod = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<std::uint64_t>(prod);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        x = (*this)();
        prod = static_cast<__uint128_t>(x) * n;
        low = static_cast<std::uint64_t>(prod);
      }
    }
    return static_cast<std::uint64_t>(prod >> 64);
  }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<std::uint64_t, 4> s_{};
};

/// Anything the samplers can draw residual randomness from.
template <class R>
concept NoiseSource = requires(R& r, std::uint64_t n) {
  { r.uniform01() } -> std::convertible_to<double>;
  { r.uniform_index(n) } -> std::convertible_to<std::uint64_t>;
};

}  // namespace wmd
