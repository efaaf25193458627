#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace kfh {

/// splitmix64 step (Steele, Lea, Flood). Used to derive seed material.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Child seed for task `index` under a master seed; used to give each
/// graph in a batch job its own statistically independent stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t s = master ^ (0x9e3779b97f4a7c15ULL * (index + 0x632be59bd9b4e019ULL));
  return splitmix64(s);
}

/// PCG32 (XSH-RR variant, O'Neill). Seedable, cheap, with independent
/// streams selected by the sequence constant. All sampling in this
/// library consumes randomness through this generator so that runs are
/// reproducible from (seed, stream) alone.
class Pcg32 {
 public:
  using result_type = std::uint32_t;

  Pcg32() : Pcg32(0x853c49e6748fea9bULL, 0xda3e39cb94b95bdbULL) {}

  Pcg32(std::uint64_t seed, std::uint64_t stream) {
    state_ = 0u;
    inc_ = (stream << 1u) | 1u;
    next();
    state_ += seed;
    next();
  }

  /// Independent stream for (master_seed, task_index) pairs, e.g. one
  /// stream per graph in a batch job.
  static Pcg32 from_stream(std::uint64_t master_seed, std::uint64_t task_index) {
    std::uint64_t s = master_seed;
    std::uint64_t a = splitmix64(s);
    s = master_seed ^ (0x9e3779b97f4a7c15ULL * (task_index + 1));
    std::uint64_t b = splitmix64(s);
    return Pcg32(a, b);
  }

  std::uint32_t next() {
    std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  std::uint32_t operator()() { return next(); }
  static constexpr std::uint32_t min() { return 0; }
  static constexpr std::uint32_t max() { return std::numeric_limits<std::uint32_t>::max(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    std::uint64_t hi = next();
    std::uint64_t lo = next();
    return static_cast<double>(((hi << 32) | lo) >> 11) * 0x1.0p-53;
  }

  /// Unbiased integer in [0, bound) via rejection.
  std::uint32_t uniform_below(std::uint32_t bound) {
    std::uint32_t threshold = (-bound) % bound;
    for (;;) {
      std::uint32_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  /// Standard normal via Box-Muller (no spare caching).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// In-place Fisher-Yates shuffle.
  template <class T>
  void shuffle(T& seq) {
    for (std::size_t i = seq.size(); i > 1; --i) {
      std::size_t j = uniform_below(static_cast<std::uint32_t>(i));
      std::swap(seq[i - 1], seq[j]);
    }
  }

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
};

}  // namespace kfh
