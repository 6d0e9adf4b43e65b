#pragma once

#include <cstdint>
#include <string_view>

namespace puffline {

// Deterministic PRNG (xoshiro256++ seeded via splitmix64). All stochastic
// code in the library draws through this type so that a fixed seed yields
// bit-identical streams across runs and platforms; the standard library
// distributions are implementation-defined and are deliberately avoided.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01();

  // Uniform in [lo, hi).
  double uniform(double lo, double hi);

  // Uniform integer in [0, n), n >= 1.
  std::uint64_t uniform_index(std::uint64_t n);

  // Standard normal via Box-Muller; deterministic draw order.
  double normal();
  double normal(double mean, double stddev);

 private:
  std::uint64_t state_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stable seed derivation: mixes a master seed with a purpose tag and indices
// so independent streams (per subject, per window, ...) never overlap.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::uint64_t a = 0, std::uint64_t b = 0);

}  // namespace puffline
