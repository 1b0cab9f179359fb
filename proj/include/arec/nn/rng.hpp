#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace arec::nn {

/// SplitMix64 finalizer. Used as the mixing function of every counter-based
/// stream so results never depend on library distribution implementations.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a ^ mix64(b + 0x632be59bd9b4e019ULL));
}

template <typename... Keys>
constexpr std::uint64_t derive_seed(std::uint64_t seed, Keys... keys) noexcept {
  std::uint64_t s = mix64(seed);
  ((s = hash_combine(s, static_cast<std::uint64_t>(keys))), ...);
  return s;
}

/// Stateless value at (key, counter): the draw for dropout element `counter`
/// of stream `key` is the same no matter the evaluation order.
constexpr std::uint64_t counter_bits(std::uint64_t key, std::uint64_t counter) noexcept {
  return mix64(key ^ mix64(counter));
}

inline double bits_to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Sequential stream over counter_bits. Portable across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_(derive_seed(seed, stream)) {}

  using result_type = std::uint64_t;
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }
  result_type operator()() noexcept { return counter_bits(key_, counter_++); }

  /// [0, 1)
  double uniform() noexcept { return bits_to_unit((*this)()); }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t r;
    do {
      r = (*this)();
    } while (r >= limit);
    return r % n;
  }

  /// Box-Muller; one normal per call (the partner draw is discarded).
  double normal(double mean = 0.0, double stddev = 1.0) noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return mean + stddev * z;
  }

  /// Knuth's multiplication method for small means, normal approximation above 30.
  std::uint64_t poisson(double mean) noexcept {
    if (mean <= 0.0) return 0;
    if (mean > 30.0) {
      const double x = std::round(normal(mean, std::sqrt(mean)));
      return x < 0.0 ? 0 : static_cast<std::uint64_t>(x);
    }
    const double limit = std::exp(-mean);
    std::uint64_t k = 0;
    double p = uniform();
    while (p > limit) {
      ++k;
      p *= uniform();
    }
    return k;
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Fisher-Yates with Rng::below, so permutations are portable.
template <typename It>
void shuffle(It first, It last, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = rng.below(i);
    std::swap(first[i - 1], first[j]);
  }
}

}  // namespace arec::nn
