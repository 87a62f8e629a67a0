#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace rdc {

// Deterministic RNG wrapper. mt19937_64 output is pinned by the standard;
// the distributions below are hand-rolled because the std:: distribution
// adapters are implementation-defined and would break bit-exact replays.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0x9e3779b97f4a7c15ull) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [lo, hi] inclusive, unbiased enough for desk-scale index draws.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(eng_() % span);
  }

  // Box-Muller; one value per call, the twin is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(6.283185307179586476925286766559 * u2);
    have_spare_ = true;
    return mag * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Derive an independent child stream; used so that e.g. data order and
  // quantization noise do not share state.
  Rng fork(uint64_t salt) {
    return Rng(splitmix(eng_() ^ (salt * 0x9e3779b97f4a7c15ull)));
  }

  static uint64_t splitmix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace rdc
