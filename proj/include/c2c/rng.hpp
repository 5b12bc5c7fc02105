#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace c2c {

// Portable draws on top of std::mt19937_64 (whose output sequence is fixed by
// the standard). The distribution adaptors in <random> are implementation
// defined, so they are avoided wherever results must be reproducible.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  // Uniform in the open interval (0, 1).
  double uniform() {
    for (;;) {
      const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
      if (u > 0.0) return u;
    }
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    for (;;) {
      const uint64_t x = engine_();
      if (x < limit) return x % n;
    }
  }

  // Difference of two independent Gumbel(0,1) draws, i.e. a standard logistic
  // sample log(u) - log(1 - u).
  double gumbel_difference() {
    const double u = uniform();
    return std::log(u) - std::log1p(-u);
  }

  template <typename Container>
  void shuffle(Container& c) {
    for (size_t i = c.size(); i > 1; --i) {
      const size_t j = below(i);
      std::swap(c[i - 1], c[j]);
    }
  }

  uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// SplitMix64 finalizer; used to derive independent child seeds.
inline uint64_t mix_seed(uint64_t a, uint64_t b = 0) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace c2c
