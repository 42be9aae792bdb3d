#pragma once

#include <gradflow/types.hpp>

#include <cmath>
#include <cstdint>
#include <random>

namespace gradflow {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Mixes a base seed with stream/tag identifiers into a fresh seed.
/// Used to carve independent, reproducible substreams out of one run seed.
inline std::uint64_t deriveSeed(std::uint64_t seed, std::uint64_t tag,
                                std::uint64_t index = 0) {
  std::uint64_t s = detail::splitmix64(seed);
  s = detail::splitmix64(s ^ detail::splitmix64(tag));
  return detail::splitmix64(s ^ detail::splitmix64(index));
}

/// Seeded random stream with portable output: the mt19937_64 sequence is
/// fixed by the standard and the uniform/normal transforms are hand-rolled,
/// so identical seeds give identical draws on any platform.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : gen_(deriveSeed(seed, 0x5EEDF00DULL, stream)) {}

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; pairs are cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  std::uint64_t bits() { return gen_(); }

  Vec normalVec(Index n) {
    Vec v(n);
    for (Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  /// d x n matrix of standard normals, column by column.
  Mat normalMat(Index d, Index n) {
    Mat m(d, n);
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < d; ++i) m(i, j) = normal();
    return m;
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace gradflow
