#include "mevo/rng.hpp"

#include <cmath>

namespace mevo {

std::uint64_t derive_seed(std::uint64_t base, std::string_view purpose, std::uint64_t a,
                          std::uint64_t b) {
  // FNV-1a over the purpose tag, then mixed with the numeric coordinates.
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const char c : purpose) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001B3ULL;
  }
  return splitmix64(splitmix64(splitmix64(base ^ h) ^ a) ^ b);
}

double Rng::exponential(double mean) {
  if (mean <= 0.0) return 0.0;
  return -mean * std::log1p(-uniform());
}

}  // namespace mevo
