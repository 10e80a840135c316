#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

namespace ghostlab {

// 64-bit finalizer (Stafford mix13, the splitmix64 output function).
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Counter-based random stream: every output is a pure function of
// (seed, stream, draw index). A simulation that gives trial i the stream
// id i therefore produces bit-identical results for any worker count and
// any execution order. Statistically this is splitmix64 with a keyed
// starting point, which is good enough for Monte Carlo tallies.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix64(mix64(seed + 0x9e3779b97f4a7c15ull) ^
                   (0xbf58476d1ce4e5b9ull * (stream + 1)))) {}

  std::uint64_t next_u64() {
    return mix64(key_ + 0x9e3779b97f4a7c15ull * ++counter_);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller pair; rejection-free so the draw count per call is fixed.
  std::pair<double, double> normal_pair() {
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));
    const double a = 2.0 * M_PI * u2;
    return {r * std::cos(a), r * std::sin(a)};
  }

  double normal() { return normal_pair().first; }

  // Knuth's product method; exact for the moderate means used here.
  // Falls back to a rounded normal only for extreme means.
  long poisson(double mean) {
    if (mean <= 0.0) return 0;
    if (mean > 1000.0) {
      const double x = mean + std::sqrt(mean) * normal();
      return x > 0 ? static_cast<long>(std::lround(x)) : 0;
    }
    const double limit = std::exp(-mean);
    long k = 0;
    double prod = uniform();
    while (prod > limit) {
      ++k;
      prod *= uniform();
    }
    return k;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace ghostlab
