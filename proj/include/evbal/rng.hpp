#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace evbal {

// Deterministic splitmix64-based generator. All randomness in the project
// flows through this type so that runs are reproducible bit-for-bit across
// platforms; <random> engines and distributions are implementation-defined
// and are not used.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : base_(seed), state_(seed) {}

  // Derived stream keyed by `key`. Forks depend only on the construction
  // seed, never on how much of this stream was consumed, so loop iterations
  // keyed by index are independent of evaluation order.
  Rng fork(std::uint64_t key) const { return Rng(mix(base_ ^ mix(key ^ 0x9e3779b97f4a7c15ull))); }
  Rng fork(std::uint64_t a, std::uint64_t b) const { return fork(mix(a) ^ (b * 0xbf58476d1ce4e5b9ull + 0x94d049bb133111ebull)); }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
    return static_cast<std::uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller; consumes two uniforms per draw.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Exact Poisson sampler. Inversion by multiplication for small rates,
  // split recursively for large ones so the product never underflows.
  std::uint64_t poisson(double lambda) {
    if (lambda < 0) throw std::invalid_argument("poisson: negative rate");
    if (lambda == 0) return 0;
    std::uint64_t total = 0;
    while (lambda > 30.0) {
      total += poisson_small(30.0);
      lambda -= 30.0;
    }
    return total + poisson_small(lambda);
  }

  std::uint64_t binomial(std::uint64_t n, double p) {
    if (p <= 0) return 0;
    if (p >= 1) return n;
    std::uint64_t count = 0;
    for (std::uint64_t i = 0; i < n; ++i)
      if (uniform() < p) ++count;
    return count;
  }

  // Apportions `n` items over categories with the given weights; conserves
  // the total exactly.
  std::vector<std::uint64_t> multinomial(std::uint64_t n, const std::vector<double>& weights) {
    double total_w = 0;
    for (double w : weights) {
      if (w < 0) throw std::invalid_argument("multinomial: negative weight");
      total_w += w;
    }
    std::vector<std::uint64_t> counts(weights.size(), 0);
    if (total_w <= 0) {
      if (n > 0) throw std::invalid_argument("multinomial: zero total weight with items to place");
      return counts;
    }
    std::uint64_t remaining = n;
    double w_remaining = total_w;
    for (std::size_t i = 0; i + 1 < weights.size() && remaining > 0; ++i) {
      if (w_remaining <= 0) break;
      double p = weights[i] / w_remaining;
      std::uint64_t c = binomial(remaining, p < 1 ? p : 1);
      counts[i] = c;
      remaining -= c;
      w_remaining -= weights[i];
    }
    if (!weights.empty()) counts.back() += remaining;
    return counts;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t poisson_small(double lambda) {
    const double limit = std::exp(-lambda);
    double prod = uniform();
    std::uint64_t k = 0;
    while (prod > limit) {
      ++k;
      prod *= uniform();
    }
    return k;
  }

  std::uint64_t base_;
  std::uint64_t state_;
};

}  // namespace evbal
