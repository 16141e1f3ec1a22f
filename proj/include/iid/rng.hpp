#ifndef IID_RNG_HPP_
#define IID_RNG_HPP_

#include <cstdint>
#include <random>

#include "iid/tensor.hpp"

namespace iid {

// Deterministic random source. All variates are derived from raw 64-bit
// draws so that identical seeds produce identical streams on every
// platform, independent of the standard library's distribution code.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  // Derived stream for parallel generation; (seed, stream) pairs give
  // decorrelated, reproducible streams.
  Rng(uint64_t seed, uint64_t stream)
      : gen_(seed ^ (0x9E3779B97F4A7C15ull * (stream + 1))) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is negligible for n << 2^64.
  uint64_t below(uint64_t n) { return gen_() % n; }

  // Standard normal via Box-Muller on explicit uniform draws.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void fill_uniform(TensorT<T>& t, double lo, double hi) {
    for (auto& v : t.data) v = static_cast<T>(uniform(lo, hi));
  }

  template <typename T>
  void fill_normal(TensorT<T>& t, double mean, double stddev) {
    for (auto& v : t.data) v = static_cast<T>(mean + stddev * normal());
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace iid

#endif  // IID_RNG_HPP_
