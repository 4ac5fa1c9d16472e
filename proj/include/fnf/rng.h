#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fnf {

// splitmix64; used to derive independent stream seeds.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) { return mix64(mix64(a) ^ (b + 0x9e3779b97f4a7c15ull)); }

// Deterministic random stream. The mt19937_64 engine is bit-exact across
// platforms; the distribution transforms below are our own so results do not
// depend on the standard library's implementation-defined distributions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // log-uniform over [lo, hi], lo > 0
  double log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }

  // [0, n)
  int uniform_int(int n) {
    return static_cast<int>(uniform() * static_cast<double>(n));
  }

  // +1 or -1 with equal probability
  double sign() { return (gen_() & 1ull) ? 1.0 : -1.0; }

  // Standard normal via Box-Muller; pairs are cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 gen_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

// Worker streams: one independent Rng per (master seed, stream index).
inline Rng stream_rng(uint64_t master_seed, uint64_t stream) {
  return Rng(mix64(master_seed, stream));
}

}  // namespace fnf
