#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace decoysl {

// Seeded stream used everywhere randomness is needed. The engine is the
// standard 64-bit Mersenne twister, whose output sequence is fixed by the
// C++ standard, and every draw is built from raw engine words so results do
// not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Always consumes exactly one draw, even when mean == 0.
  double exponential(double mean);
  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n), n > 0.
  std::size_t index(std::size_t n);

  // Standard normal via Box-Muller (consumes two draws).
  double normal();

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer over (base, stream); used to derive independent
// substream seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace decoysl
