#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace oobval {

// Bad flag/config-file contents. CLI maps this to its own exit code.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unusable input data (malformed CSV, dimension mismatch, fingerprint mismatch).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A computation was asked to do something out of contract (scale guards,
// empty conditioning sets, degenerate inputs).
class ComputeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major 2-D array.
template <typename T>
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<T> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const T> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  bool operator==(const Grid&) const = default;
};

using Matrix = Grid<double>;
using CellMask = Grid<std::uint8_t>;
using PointMask = std::vector<std::uint8_t>;

// Cells with no out-of-bag evidence carry NaN, never a silent zero.
inline constexpr double kMissingScore = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double x) { return std::isnan(x); }

// Shortest decimal string that round-trips the exact double.
std::string format_double(double x);

// Writes via a temp file in the same directory, then renames into place.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace oobval
