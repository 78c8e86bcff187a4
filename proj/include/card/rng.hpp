#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "card/types.hpp"

namespace card {

// Seeded random source. Uniform draws are built from raw 64-bit output so the
// stream is identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Draws an index from non-negative weights (need not sum to one).
  // Returns the last positive-weight index on round-off overrun.
  TokenId categorical(std::span<const double> weights);

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer; used for seed derivation and hashed toy-model tables.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix64(base ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

}  // namespace card
