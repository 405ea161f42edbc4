#pragma once

#include <cstdint>
#include <vector>

namespace oobval {

// All randomness in this project flows through one generator family:
// xoshiro256** (Blackman & Vigna 2018) seeded via the SplitMix64 finalizer
// (Steele, Lea & Flood 2014). There is no global RNG state; every consumer
// takes an explicit 64-bit seed.

// SplitMix64 finalizer. Used for state expansion and stream derivation.
std::uint64_t mix64(std::uint64_t z);

// Deterministic per-stream seed. Streams must not be reused across purposes;
// callers enumerate them (learner index, sample index, stage tag).
std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t stream);

class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform on the open interval (0,1); never returns 0 or 1.
  double uniform();

  // Unbiased integer in [0, bound), bound >= 1. Lemire multiply-shift with
  // rejection.
  std::uint64_t uniform_below(std::uint64_t bound);

  // Standard normal via the inverse CDF applied to uniform().
  double normal();

 private:
  std::uint64_t s_[4];
};

// Inverse standard normal CDF, p in (0,1). Acklam's rational approximation
// with one Halley refinement; absolute error well under 1e-9 over the
// quantiles used here.
double normal_quantile(double p);

// Standard normal CDF.
double normal_cdf(double x);

// k distinct values from [0, n), ascending. Partial Fisher-Yates then sort.
std::vector<std::uint32_t> sample_without_replacement(std::uint64_t n, std::uint64_t k, Rng& rng);

// In-place Fisher-Yates shuffle.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.uniform_below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace oobval
