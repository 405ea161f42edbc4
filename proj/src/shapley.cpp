#include "oobval/shapley.hpp"

#include <bit>
#include <cmath>

#include "oobval/rng.hpp"

namespace oobval {

double Utility1D::operator()(std::uint32_t mask) const {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = memo_.find(mask);
    if (it != memo_.end()) return it->second;
  }
  const double value = fn_(mask);
  std::lock_guard<std::mutex> lock(mutex_);
  return memo_.emplace(mask, value).first->second;
}

double Utility2D::operator()(std::uint32_t rows, std::uint32_t cols) const {
  if (!delegate_empty_ && (rows == 0 || cols == 0)) return empty_value_;
  const std::uint64_t key = (static_cast<std::uint64_t>(rows) << 32) | cols;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
  }
  const double value = fn_(rows, cols);
  std::lock_guard<std::mutex> lock(mutex_);
  return memo_.emplace(key, value).first->second;
}

namespace {

// Pascal triangle of binomial coefficients, exact in double at these scales.
std::vector<std::vector<double>> binomials(std::size_t n) {
  std::vector<std::vector<double>> c(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    c[i].assign(i + 1, 1.0);
    for (std::size_t j = 1; j < i; ++j) c[i][j] = c[i - 1][j - 1] + c[i - 1][j];
  }
  return c;
}

}  // namespace

std::vector<double> exact_data_shapley(const Utility1D& u, std::size_t n) {
  if (n < 1 || n > 12) throw ComputeError("exact_data_shapley: n must be in [1, 12]");
  const auto choose = binomials(n);
  std::vector<double> phi(n, 0.0);
  const std::uint32_t full = (1u << n) - 1;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bit = 1u << i;
    const std::uint32_t others = full & ~bit;
    double value = 0.0;
    std::uint32_t s = 0;
    while (true) {  // all subsets of others, empty set included
      const int size = std::popcount(s);
      const double weight = 1.0 / (static_cast<double>(n) * choose[n - 1][size]);
      value += weight * (u(s | bit) - u(s));
      if (s == others) break;
      s = (s - others) & others;
    }
    phi[i] = value;
  }
  return phi;
}

Matrix exact_2d_shapley(const Utility2D& u, std::size_t n, std::size_t d) {
  if (n < 1 || n > 6 || d < 1 || d > 6) {
    throw ComputeError("exact_2d_shapley: n and d must be in [1, 6]");
  }
  const auto row_choose = binomials(n);
  const auto col_choose = binomials(d);
  const std::uint32_t rows_full = (1u << n) - 1;
  const std::uint32_t cols_full = (1u << d) - 1;
  Matrix psi(n, d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t ib = 1u << i;
    for (std::size_t j = 0; j < d; ++j) {
      const std::uint32_t jb = 1u << j;
      double value = 0.0;
      for (std::uint32_t s = 0; s <= rows_full; ++s) {
        if (s & ib) continue;
        const double row_weight = row_choose[n - 1][std::popcount(s)];
        for (std::uint32_t f = 0; f <= cols_full; ++f) {
          if (f & jb) continue;
          const double delta =
              u(s | ib, f | jb) + u(s, f) - u(s | ib, f) - u(s, f | jb);
          value += delta / (row_weight * col_choose[d - 1][std::popcount(f)]);
        }
      }
      psi(i, j) = value / (static_cast<double>(n) * static_cast<double>(d));
    }
  }
  return psi;
}

Mc2dResult mc_2d_shapley(const Utility2D& u, std::size_t n, std::size_t d, std::size_t num_samples,
                         std::uint64_t seed) {
  if (n < 1 || n > 25 || d < 1 || d > 25) throw ComputeError("mc_2d_shapley: n and d must be in [1, 25]");
  if (num_samples < 1) throw ComputeError("mc_2d_shapley: need at least one sample");

  Matrix mean(n, d, 0.0);
  Matrix m2(n, d, 0.0);
  std::vector<std::uint32_t> row_perm(n), col_perm(d);
  std::vector<std::uint32_t> row_pred(n), col_pred(d);

  for (std::size_t s = 0; s < num_samples; ++s) {
    Rng rng(derive_seed(seed, s));
    for (std::size_t i = 0; i < n; ++i) row_perm[i] = static_cast<std::uint32_t>(i);
    shuffle(row_perm, rng);
    for (std::size_t j = 0; j < d; ++j) col_perm[j] = static_cast<std::uint32_t>(j);
    shuffle(col_perm, rng);

    std::uint32_t acc = 0;
    for (std::size_t p = 0; p < n; ++p) {
      row_pred[row_perm[p]] = acc;
      acc |= 1u << row_perm[p];
    }
    acc = 0;
    for (std::size_t p = 0; p < d; ++p) {
      col_pred[col_perm[p]] = acc;
      acc |= 1u << col_perm[p];
    }

    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t sp = row_pred[i];
      const std::uint32_t ib = 1u << i;
      for (std::size_t j = 0; j < d; ++j) {
        const std::uint32_t fp = col_pred[j];
        const std::uint32_t jb = 1u << j;
        const double delta = u(sp | ib, fp | jb) + u(sp, fp) - u(sp | ib, fp) - u(sp, fp | jb);
        const double d1 = delta - mean(i, j);
        mean(i, j) += d1 / static_cast<double>(s + 1);
        m2(i, j) += d1 * (delta - mean(i, j));
      }
    }
  }

  Mc2dResult result;
  result.estimate = std::move(mean);
  result.standard_error = Matrix(n, d, 0.0);
  if (num_samples >= 2) {
    const double k = static_cast<double>(num_samples);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        result.standard_error(i, j) = std::sqrt(m2(i, j) / (k * (k - 1.0)));
      }
    }
  }
  return result;
}

}  // namespace oobval
