#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace signet {

// SplitMix64 generator. Chosen because the algorithm is tiny, portable, and
// has published test vectors (seed 0 -> 0xE220A8397B1DCDAF), so any
// reimplementation can be checked against this one draw for draw.
//
// All randomness in the project flows from one root seed through derive():
// each purpose (init, split, shuffle, augmentation, dropout, synthesis) gets
// its own child stream, so adding draws to one consumer never shifts another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0,1) from the top 53 bits (full mantissa width).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller transform. Every call consumes exactly two uniform draws and
  // returns the cosine branch; no spare is cached, so the draw sequence is a
  // pure function of the call count.
  double normal(double mean, double stddev) {
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Child stream for a given purpose tag. Runs the SplitMix64 finalizer over
  // the current state xor a tag-dependent gamma; does not advance this stream.
  Rng derive(std::uint64_t tag) const {
    std::uint64_t z = state_ ^ ((tag + 1) * 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return Rng(z ^ (z >> 31));
  }

 private:
  std::uint64_t state_;
};

}  // namespace signet
