#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace dtts {

namespace detail {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Deterministic counter-based stream. Every stochastic draw in the project
// comes from one of these, derived from an explicit (root seed, path) pair,
// so runs are bit-reproducible regardless of call-site reordering elsewhere.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : state_(seed) {}

  // Derive an independent stream from a root seed and an integer path,
  // e.g. derive(root, {kTrainStep, step, item}).
  static RngStream derive(uint64_t root, std::initializer_list<uint64_t> path) {
    uint64_t s = root;
    for (uint64_t p : path) {
      s ^= 0x9e3779b97f4a7c15ULL + p;
      detail::splitmix64(s);
      s = detail::splitmix64(s);
    }
    return RngStream(s);
  }

  uint64_t next_u64() { return detail::splitmix64(state_); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

  bool coin() { return (next_u64() & 1ULL) != 0; }

  // Box-Muller; two uniform draws per sample, no cached spare.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    u1 = u1 <= 0.0 ? 0x1.0p-53 : u1;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Beta(2,2) via the closed-form inverse CDF: the CDF is 3x^2 - 2x^3,
  // whose inverse is 1/2 - sin(asin(1 - 2u) / 3).
  double beta22() {
    double u = uniform();
    return 0.5 - std::sin(std::asin(1.0 - 2.0 * u) / 3.0);
  }

  // Fisher-Yates permutation of {0, ..., n-1}.
  template <typename Out>
  void permutation(size_t n, Out& out) {
    out.resize(n);
    for (size_t i = 0; i < n; ++i) out[i] = i;
    for (size_t i = n; i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_index(i));
      std::swap(out[i - 1], out[j]);
    }
  }

 private:
  uint64_t state_;
};

// Stable 64-bit content hash (FNV-1a); used for cache invalidation only.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace dtts
