#include "diu/rng.hpp"

#include <cmath>
#include <numbers>

namespace diu {

int64_t CounterRng::next_int(int64_t lo, int64_t hi) {
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  return lo + static_cast<int64_t>(next_u64() % span);
}

double CounterRng::next_normal() {
  if (have_cached_) {
    have_cached_ = false;
    return cached_;
  }
  // u1 in (0,1]: avoids log(0)
  const double u1 = 1.0 - next_double();
  const double u2 = next_double();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  cached_ = r * std::sin(theta);
  have_cached_ = true;
  return r * std::cos(theta);
}

uint64_t hash_label(std::string_view label) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

uint64_t derive_seed(uint64_t root, std::string_view label) {
  return mix64(root ^ mix64(hash_label(label)));
}

uint64_t derive_seed(uint64_t root, std::string_view label, uint64_t a) {
  return mix64(derive_seed(root, label) ^ mix64(a + kGoldenGamma));
}

uint64_t derive_seed(uint64_t root, std::string_view label, uint64_t a, uint64_t b) {
  return mix64(derive_seed(root, label, a) ^ mix64(b + 2 * kGoldenGamma));
}

void shuffled_indices(int n, CounterRng& rng, int* out) {
  for (int i = 0; i < n; ++i) out[i] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_int(0, i));
    const int tmp = out[i];
    out[i] = out[j];
    out[j] = tmp;
  }
}

}  // namespace diu
