#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "peec/errors.hpp"

namespace peec {

namespace detail {

// splitmix64 finalizer; also used to expand seeds and derive child streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix(std::uint64_t x) { return splitmix64(x); }

} // namespace detail

/// Deterministic random source: xoshiro256** seeded through splitmix64.
///
/// The algorithm is fixed so that a seed produces the same stream on every
/// platform. Uniform draws are bit-exact everywhere; normal draws go through
/// Box-Muller and inherit the rounding of the host libm. A source is
/// single-owner; concurrent work must use `child()` streams.
class RandomSource {
public:
  explicit RandomSource(std::uint64_t seed = 0) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = detail::splitmix64(sm);
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1); 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    if (!(lo < hi)) throw ValueError("uniform: lo must be < hi");
    return lo + (hi - lo) * next_double();
  }

  /// Gaussian draw via Box-Muller; the second value of each pair is cached.
  double normal(double mean, double std) {
    if (!(std > 0.0)) throw ValueError("normal: std must be > 0");
    return mean + std * next_standard_normal();
  }

  double next_standard_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Deterministic seed-split: the child stream depends only on (seed, stream).
  RandomSource child(std::uint64_t stream) const {
    return RandomSource(detail::mix(seed_ ^ detail::mix(stream)));
  }

  size_t index(size_t bound) {
    if (bound == 0) throw ValueError("index: bound must be positive");
    return static_cast<size_t>(next_u64() % bound);
  }

  /// Deterministic Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t seed_;
  std::uint64_t state_[4]{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Stable seed derivation used everywhere a run fans out into sub-tasks
/// (folds, repeats, sweep entries).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return detail::mix(seed ^ detail::mix(stream));
}

} // namespace peec
