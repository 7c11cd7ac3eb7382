#include "ebscore/random.hpp"

#include <array>
#include <cmath>

namespace ebscore {
namespace {

constexpr std::array<int, 16> kPrimes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

double radical_inverse(std::uint64_t index, int base) {
  double result = 0.0;
  double scale = 1.0 / base;
  while (index > 0) {
    result += static_cast<double>(index % base) * scale;
    index /= base;
    scale /= base;
  }
  return result;
}

}  // namespace

Matrix halton_points(Index count, Index dim, std::uint64_t seed) {
  require(dim >= 1 && dim <= static_cast<Index>(kPrimes.size()), "halton_points: dim must be in [1, 16]");
  require(count >= 0, "halton_points: negative count");
  Rng rng(derive_seed(seed, {0x4A17u}));
  Vector shift(dim);
  for (Index j = 0; j < dim; ++j) shift(j) = rng.uniform();

  Matrix points(count, dim);
  for (Index i = 0; i < count; ++i) {
    for (Index j = 0; j < dim; ++j) {
      double u = radical_inverse(static_cast<std::uint64_t>(i + 1), kPrimes[j]) + shift(j);
      points(i, j) = u - std::floor(u);
    }
  }
  return points;
}

}  // namespace ebscore
