#pragma once

#include <cstdint>
#include <cmath>
#include <functional>
#include <thread>
#include <vector>

namespace spdelab {

/// Counter-based deterministic RNG used everywhere in the library.
///
/// Streams are keyed by arbitrary 64-bit tuples (seed, site, component,
/// replica, ...) so that sampling is reproducible and independent of
/// evaluation order and of the worker count.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    // splitmix64 of a xored stream; good enough as a key-derivation hash.
    return splitmix(a + 0x9e3779b97f4a7c15ull * (b + 1));
  }

  /// Derive an independent stream from this seed and extra key material.
  static Rng stream(std::uint64_t seed, std::uint64_t k1, std::uint64_t k2 = 0,
                    std::uint64_t k3 = 0) {
    return Rng(mix(mix(mix(seed, k1), k2), k3));
  }

  std::uint64_t next_u64() {
    // xorshift* step on splitmix-initialized state.
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dull;
  }

  /// Uniform in (0,1]; never returns 0 so that log() is safe.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1p-53;
  }

  /// Uniform in [a,b).
  double uniform(double a, double b) { return a + (b - a) * (uniform() - 0x1p-53); }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  /// Fair sign +-1.
  int sign() { return (next_u64() >> 63) ? 1 : -1; }

  /// Poisson sample; inversion for small means, PTRS otherwise.
  std::uint64_t poisson(double mean);

  /// Number of +1 outcomes among n fair signs (exact law, popcount based).
  std::uint64_t binomial_half(std::uint64_t n);

 private:
  static std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

inline std::uint64_t Rng::poisson(double mean) {
  if (mean <= 0.0) return 0;
  if (mean < 30.0) {
    double l = std::exp(-mean), p = 1.0;
    std::uint64_t k = 0;
    do {
      ++k;
      p *= uniform();
    } while (p > l);
    return k - 1;
  }
  // PTRS transformed rejection (Hormann 1993).
  const double b = 0.931 + 2.53 * std::sqrt(mean);
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    double u = uniform() - 0.5;
    double v = uniform();
    double us = 0.5 - std::fabs(u);
    double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= v_r) return static_cast<std::uint64_t>(kf);
    if (kf < 0.0 || (us < 0.013 && v > us)) continue;
    double lg = std::lgamma(kf + 1.0);
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        kf * std::log(mean) - mean - lg)
      return static_cast<std::uint64_t>(kf);
  }
}

inline std::uint64_t Rng::binomial_half(std::uint64_t n) {
  std::uint64_t ones = 0;
  while (n >= 64) {
    ones += static_cast<std::uint64_t>(__builtin_popcountll(next_u64()));
    n -= 64;
  }
  if (n > 0) {
    std::uint64_t mask = (n == 64) ? ~0ull : ((1ull << n) - 1ull);
    ones += static_cast<std::uint64_t>(__builtin_popcountll(next_u64() & mask));
  }
  return ones;
}

/// Run fn(i) for i in [0,n) on `jobs` threads. Results must be written to
/// preallocated per-index slots; chunking is static so output never depends
/// on scheduling.
inline void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  const unsigned w = std::min<std::size_t>(jobs, n);
  workers.reserve(w);
  for (unsigned t = 0; t < w; ++t) {
    workers.emplace_back([=, &fn]() {
      for (std::size_t i = t; i < n; i += w) fn(i);
    });
  }
  for (auto& th : workers) th.join();
}

}  // namespace spdelab
