#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace segsr {

// splitmix64, used to derive independent stream seeds from (seed, index, ...).
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) { return mix64(mix64(a) ^ (b * 0xd6e8feb86659fd93ull)); }
inline uint64_t mix64(uint64_t a, uint64_t b, uint64_t c) { return mix64(mix64(a, b), c); }
inline uint64_t mix64(uint64_t a, uint64_t b, uint64_t c, uint64_t d) { return mix64(mix64(a, b, c), d); }

// Deterministic RNG. mt19937_64 output is pinned by the standard and the
// distributions below are hand-rolled, so streams are reproducible across
// compilers given the same seed.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t u64() { return eng_(); }

  // uniform in [0, 1)
  double uniform() { return double(u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n), n >= 1
  uint64_t below(uint64_t n) {
    // rejection sampling to avoid modulo bias
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = u64();
    while (v >= limit) v = u64();
    return v % n;
  }

  // standard normal via Box-Muller (pairs cached)
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // sample index from an (unnormalized tolerated) probability row
  template <class T>
  int categorical(std::span<const T> probs) {
    double total = 0.0;
    for (T p : probs) total += double(p);
    double u = uniform() * total;
    double acc = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
      acc += double(probs[i]);
      if (u < acc) return int(i);
    }
    return int(probs.size()) - 1;
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace segsr
