#pragma once

#include <cstdint>
#include <string_view>

namespace diu {

inline constexpr uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ull;

// splitmix64 finalizer
constexpr uint64_t mix64(uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

// Counter-based generator: output i is a pure function of (seed, i). No
// platform-dependent state, so streams replay bit-exactly anywhere.
class CounterRng {
 public:
  explicit CounterRng(uint64_t seed) : seed_(seed) {}

  uint64_t next_u64() { return mix64(seed_ + (++counter_) * kGoldenGamma); }

  // uniform in [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [lo, hi], inclusive
  int64_t next_int(int64_t lo, int64_t hi);

  // standard normal, Box-Muller; the paired value is cached
  double next_normal();

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  uint64_t counter_ = 0;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

// FNV-1a over the label bytes.
uint64_t hash_label(std::string_view label);

// Stable labeled child-seed derivation. Every subsystem draws from its own
// derived stream, so adding a consumer never perturbs another one.
uint64_t derive_seed(uint64_t root, std::string_view label);
uint64_t derive_seed(uint64_t root, std::string_view label, uint64_t a);
uint64_t derive_seed(uint64_t root, std::string_view label, uint64_t a, uint64_t b);

// Deterministic Fisher-Yates over [0, n)
void shuffled_indices(int n, CounterRng& rng, int* out);

}  // namespace diu
