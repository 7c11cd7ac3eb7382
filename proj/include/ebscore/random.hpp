#pragma once

#include "ebscore/core.hpp"

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace ebscore {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Deterministic child seed for (seed, key...). Order of keys matters.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t state = mix64(seed);
  for (std::uint64_t key : keys) state = mix64(state ^ mix64(key + 0xD1B54A32D192ED03ULL));
  return state;
}

/// Counter-based generator: the i-th output is a pure function of (key, i).
///
/// Streams are cheap to create, so every (run, sample, step) triple can own
/// one and results never depend on the order in which streams are consumed.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t key = 0) noexcept : key_(mix64(key)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return mix64(key_ + 0x9E3779B97F4A7C15ULL * counter_++); }

  /// Uniform on (0, 1); never returns 0 or 1.
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

inline Vector standard_normal(Rng& rng, Index dim) {
  std::normal_distribution<double> normal;
  Vector z(dim);
  for (Index i = 0; i < dim; ++i) z(i) = normal(rng);
  return z;
}

/// Rows of a count x dim matrix of i.i.d. N(0, 1) draws.
inline Matrix standard_normal(Rng& rng, Index count, Index dim) {
  std::normal_distribution<double> normal;
  Matrix z(count, dim);
  for (Index r = 0; r < count; ++r)
    for (Index c = 0; c < dim; ++c) z(r, c) = normal(rng);
  return z;
}

/// Halton points in [0, 1)^dim with a seeded Cranley-Patterson rotation.
Matrix halton_points(Index count, Index dim, std::uint64_t seed);

}  // namespace ebscore
