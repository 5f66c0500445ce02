#include "ppssl/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace ppssl {

std::int64_t Rng::uniform_int(std::int64_t n) {
  if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  // rejection sampling to avoid modulo bias
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t x;
  do {
    x = bits();
  } while (x >= limit);
  return static_cast<std::int64_t>(x % un);
}

double Rng::normal() {
  // u1 in (0,1] so log() is finite
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t Rng::derive(std::uint64_t seed, const std::string& name, std::uint64_t a,
                          std::uint64_t b) {
  // FNV-1a over the name, then splitmix64 steps folding in seed and coords
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  h = mix(h ^ mix(seed));
  h = mix(h ^ mix(a + 0x51ed270b4d2853ull));
  h = mix(h ^ mix(b + 0x63689f2b1a3cull));
  return h;
}

}  // namespace ppssl
