#pragma once

#include <cstdint>
#include <functional>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "oobval/common.hpp"

namespace oobval {

// Verification-scale cooperative-game oracles. Subsets are bitmasks: bit i
// set means element i belongs to the coalition. Wrappers memoize the wrapped
// callable; memoized and direct evaluation agree bit-exactly.

class Utility1D {
 public:
  using Fn = std::function<double(std::uint32_t mask)>;
  explicit Utility1D(Fn fn) : fn_(std::move(fn)) {}

  double operator()(std::uint32_t mask) const;

 private:
  Fn fn_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::uint32_t, double> memo_;
};

class Utility2D {
 public:
  using Fn = std::function<double(std::uint32_t rows, std::uint32_t cols)>;

  // By default an empty row or column set evaluates to empty_value without
  // calling fn; pass delegate_empty when the callable defines those values
  // itself.
  explicit Utility2D(Fn fn, double empty_value = 0.0, bool delegate_empty = false)
      : fn_(std::move(fn)), empty_value_(empty_value), delegate_empty_(delegate_empty) {}

  double operator()(std::uint32_t rows, std::uint32_t cols) const;

 private:
  Fn fn_;
  double empty_value_;
  bool delegate_empty_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::uint64_t, double> memo_;
};

// Exact point values by full subset enumeration. Hard limit n <= 12.
std::vector<double> exact_data_shapley(const Utility1D& u, std::size_t n);

// Exact joint values by full double enumeration. Hard limit n, d <= 6.
Matrix exact_2d_shapley(const Utility2D& u, std::size_t n, std::size_t d);

struct Mc2dResult {
  Matrix estimate;
  Matrix standard_error;  // zero when num_samples < 2
};

// Unbiased Monte Carlo estimate of the exact joint values: each sample draws
// independent uniform row and column permutations and evaluates the bilateral
// marginal contribution of every cell against its predecessor sets.
Mc2dResult mc_2d_shapley(const Utility2D& u, std::size_t n, std::size_t d, std::size_t num_samples,
                         std::uint64_t seed);

}  // namespace oobval
