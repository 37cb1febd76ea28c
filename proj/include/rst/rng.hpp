#pragma once

#include <cstdint>

namespace rst::rng {

// Inverse standard-normal CDF (Wichura's AS241, double precision).
double normal_quantile(double p);

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Combines a seed with a stream id into a decorrelated stream state.
inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(a + 0x9E3779B97F4A7C15ull) ^ (b + 0xD1B54A32D192ED03ull));
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix(mix(a, b), c);
}

// Counter-style splitmix64 stream. Streams created from distinct
// (seed, id) pairs are independent for Monte Carlo purposes, which is what
// makes replicate-indexed parallelism order- and worker-count-invariant.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : state_(mix64(seed + 0x9E3779B97F4A7C15ull)) {}
  Stream(std::uint64_t seed, std::uint64_t id) : state_(mix(seed, id)) {}
  Stream(std::uint64_t seed, std::uint64_t id, std::uint64_t sub)
      : state_(mix(seed, id, sub)) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform on the open interval (0, 1); never returns an endpoint.
  double next_u01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_u01(); }

  double next_normal() { return normal_quantile(next_u01()); }

  double next_rademacher() { return (next_u64() >> 63) ? 1.0 : -1.0; }

 private:
  std::uint64_t state_;
};

}  // namespace rst::rng
