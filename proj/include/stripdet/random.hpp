#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

#include "stripdet/tensor.hpp"

namespace stripdet {

// Deterministic generator. Values are derived from raw mt19937_64 output so
// sequences do not depend on the standard library's distribution classes.
//
// Seeds flow from one root: Rng(seed).split("init") gives the weight-init
// stream, split("synth") the synthetic-scene stream, and so on. A split
// stream depends only on (root seed, tag).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  Rng split(std::string_view tag) const {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (char ch : tag) {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ull;
    }
    return Rng(mix(seed_ ^ h));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

template <typename T>
void fill_uniform(Tensor4<T>& t, Rng& rng, T lo, T hi) {
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
}

template <typename T>
Tensor4<T> random_tensor(Dims dims, Rng& rng, T lo = T(-1), T hi = T(1)) {
  Tensor4<T> t(dims);
  fill_uniform(t, rng, lo, hi);
  return t;
}

}  // namespace stripdet
