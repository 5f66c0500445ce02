#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace ppssl {

// Deterministic RNG. mt19937_64 supplies the bits; the uniform/normal
// transforms are written out here instead of using std:: distributions,
// whose output is implementation-defined. Every consumer derives a named
// substream so adding or removing one consumer never shifts another's
// sequence (training data order, weight init and synthetic rendering all
// stay stable when modules are toggled).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::int64_t uniform_int(std::int64_t n);

  // Standard normal via Box-Muller (one value per call, no caching, so the
  // stream position is a pure function of the call count).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Derives an independent seed for a named substream of `seed`, mixing in
  // up to two integer coordinates (epoch, record index, ...).
  static std::uint64_t derive(std::uint64_t seed, const std::string& name, std::uint64_t a = 0,
                              std::uint64_t b = 0);

  static Rng substream(std::uint64_t seed, const std::string& name, std::uint64_t a = 0,
                       std::uint64_t b = 0) {
    return Rng(derive(seed, name, a, b));
  }

private:
  std::mt19937_64 engine_;
};

}  // namespace ppssl
