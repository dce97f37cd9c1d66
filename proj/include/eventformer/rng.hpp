#pragma once
#include <cmath>
#include <cstdint>

namespace evf {

// Counter-based pseudorandom generator (SplitMix64 in counter mode).
// Every draw is a pure function of (key, counter), so independent streams
// are derived by key and any stream can be replayed regardless of the
// order other streams are consumed in.
class CounterRng {
 public:
  explicit CounterRng(uint64_t key) : key_(key) {}

  static uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  // Key derivation for sub-streams.
  static uint64_t mix(uint64_t a, uint64_t b) {
    return splitmix64(splitmix64(a) ^ (b + 0x9E3779B97F4A7C15ULL));
  }
  static uint64_t mix(uint64_t a, uint64_t b, uint64_t c) { return mix(mix(a, b), c); }

  // Stateless draw: uniform in [0,1) at (key, counter).
  static double uniform_at(uint64_t key, uint64_t counter) {
    return static_cast<double>(splitmix64(key ^ (counter * 0xD1342543DE82EF95ULL)) >> 11) *
           0x1.0p-53;
  }

  uint64_t next_u64() { return splitmix64(key_ ^ (counter_++ * 0xD1342543DE82EF95ULL)); }

  void skip_to(uint64_t counter) { counter_ = counter; }

  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive bounds. Spans here are tiny, so modulo bias is negligible.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  // Box-Muller; consumes exactly two counter steps.
  double normal() {
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Knuth's method; fine for the small means used here.
  int poisson(double mean) {
    double limit = std::exp(-mean);
    int k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

 private:
  uint64_t key_ = 0;
  uint64_t counter_ = 0;
};

}  // namespace evf
