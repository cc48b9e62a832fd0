#pragma once

// Platform-independent random streams. std::mt19937_64 is fully specified by
// the standard; the distributions below are written out so that draws are
// identical on every standard library.

#include <cstdint>
#include <random>
#include <string_view>

namespace mevo {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Uniform double in [0, 1) from the top 53 bits.
constexpr double unit_from_bits(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Seed for an independent substream, e.g. derive_seed(seed, "loss", src, dst).
std::uint64_t derive_seed(std::uint64_t base, std::string_view purpose, std::uint64_t a = 0,
                          std::uint64_t b = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return unit_from_bits(engine_()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Exponential with the given mean (inverse CDF).
  double exponential(double mean);
  /// Always consumes one draw, so p = 0 keeps the stream aligned.
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mevo
