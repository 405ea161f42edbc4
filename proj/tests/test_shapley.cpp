#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "oobval/rng.hpp"
#include "oobval/shapley.hpp"

using namespace oobval;

namespace {

double factorial(std::size_t k) {
  double f = 1.0;
  for (std::size_t i = 2; i <= k; ++i) f *= static_cast<double>(i);
  return f;
}

// Permutation-averaged marginal contributions, the textbook definition. Slow
// but independent of the subset-enumeration route under test.
std::vector<double> permutation_shapley(const Utility1D& u, std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> phi(n, 0.0);
  std::size_t count = 0;
  do {
    std::uint32_t mask = 0;
    for (std::size_t pos = 0; pos < n; ++pos) {
      const std::uint32_t with = mask | (1u << perm[pos]);
      phi[perm[pos]] += u(with) - u(mask);
      mask = with;
    }
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  for (auto& v : phi) v /= static_cast<double>(count);
  return phi;
}

// Double-permutation average for joint values; loop order and accumulation
// differ from the library's weighted-subset enumeration.
Matrix permutation_2d_shapley(const Utility2D& u, std::size_t n, std::size_t d) {
  std::vector<std::size_t> rp(n), cp(d);
  std::iota(rp.begin(), rp.end(), 0);
  Matrix psi(n, d, 0.0);
  std::size_t count = 0;
  do {
    std::iota(cp.begin(), cp.end(), 0);
    do {
      std::uint32_t rmask = 0;
      for (std::size_t ri = 0; ri < n; ++ri) {
        const std::uint32_t rwith = rmask | (1u << rp[ri]);
        std::uint32_t cmask = 0;
        for (std::size_t ci = 0; ci < d; ++ci) {
          const std::uint32_t cwith = cmask | (1u << cp[ci]);
          psi(rp[ri], cp[ci]) +=
              u(rwith, cwith) - u(rmask, cwith) - u(rwith, cmask) + u(rmask, cmask);
          cmask = cwith;
        }
        rmask = rwith;
      }
      ++count;
    } while (std::next_permutation(cp.begin(), cp.end()));
  } while (std::next_permutation(rp.begin(), rp.end()));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) psi(i, j) /= static_cast<double>(count);
  return psi;
}

double random_table_value(std::uint64_t seed, std::uint32_t mask) {
  return Rng(derive_seed(seed, mask)).uniform();
}

}  // namespace

TEST_CASE("cardinality utility gives every player the same unit value") {
  const std::size_t n = 6;
  const Utility1D u([](std::uint32_t mask) { return static_cast<double>(std::popcount(mask)); });
  const auto phi = exact_data_shapley(u, n);
  REQUIRE(phi.size() == n);
  for (double v : phi) CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("point values sum to the grand-coalition value") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const std::size_t n = 8;
    const Utility1D u([seed](std::uint32_t mask) { return random_table_value(seed, mask); });
    const auto phi = exact_data_shapley(u, n);
    const double total = std::accumulate(phi.begin(), phi.end(), 0.0);
    const double expect = u((1u << n) - 1) - u(0);
    CHECK(total == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("symmetric players receive equal value") {
  // players 0 and 1 are interchangeable: value depends only on whether at
  // least one of them joined, plus the count of the others
  const Utility1D u([](std::uint32_t mask) {
    const bool pair = (mask & 0b11u) != 0;
    const int others = std::popcount(mask >> 2);
    return (pair ? 5.0 : 0.0) + 1.5 * others;
  });
  const auto phi = exact_data_shapley(u, 5);
  CHECK(phi[0] == doctest::Approx(phi[1]).epsilon(1e-14));
  CHECK(phi[2] == doctest::Approx(1.5).epsilon(1e-14));
}

TEST_CASE("a dummy player gets zero") {
  const Utility1D u([](std::uint32_t mask) {
    return static_cast<double>(std::popcount(mask & 0b1101u));  // player 1 never matters
  });
  const auto phi = exact_data_shapley(u, 4);
  CHECK(std::abs(phi[1]) <= 1e-15);
}

TEST_CASE("subset enumeration matches the permutation definition") {
  const std::size_t n = 5;
  const Utility1D u([](std::uint32_t mask) { return random_table_value(777, mask); });
  const auto fast = exact_data_shapley(u, n);
  const auto slow = permutation_shapley(u, n);
  for (std::size_t i = 0; i < n; ++i)
    CHECK(std::abs(fast[i] - slow[i]) <= 1e-12);
}

TEST_CASE("weighting sanity: n=2 closed form") {
  // phi_0 = (u({0}) - u({})) / 2 + (u({0,1}) - u({1})) / 2
  const Utility1D u([](std::uint32_t mask) {
    switch (mask) {
      case 0b00: return 0.0;
      case 0b01: return 3.0;
      case 0b10: return 1.0;
      default: return 10.0;
    }
  });
  const auto phi = exact_data_shapley(u, 2);
  CHECK(phi[0] == doctest::Approx((3.0 - 0.0) / 2 + (10.0 - 1.0) / 2).epsilon(1e-14));
  CHECK(phi[1] == doctest::Approx((1.0 - 0.0) / 2 + (10.0 - 3.0) / 2).epsilon(1e-14));
}

TEST_CASE("product game spreads value evenly over every cell") {
  const std::size_t n = 4, d = 3;
  const Utility2D u([](std::uint32_t rows, std::uint32_t cols) {
    return static_cast<double>(std::popcount(rows) * std::popcount(cols));
  });
  const Matrix psi = exact_2d_shapley(u, n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      CHECK(psi(i, j) == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("row-only games concentrate nothing on cells") {
  // u depends on rows alone; every bilateral contribution cancels
  const std::size_t n = 3, d = 3;
  const Utility2D u(
      [](std::uint32_t rows, std::uint32_t) { return static_cast<double>(std::popcount(rows)); },
      0.0, true);
  const Matrix psi = exact_2d_shapley(u, n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(psi(i, j)) <= 1e-13);
}

TEST_CASE("joint values match the double-permutation definition") {
  const std::size_t n = 3, d = 3;
  const Utility2D u([](std::uint32_t rows, std::uint32_t cols) {
    const std::uint32_t key = (rows << 8) | cols;
    return random_table_value(2024, key);
  });
  const Matrix fast = exact_2d_shapley(u, n, d);
  const Matrix slow = permutation_2d_shapley(u, n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(fast(i, j) - slow(i, j)) <= 1e-12);
}

TEST_CASE("joint values satisfy two-sided efficiency") {
  const std::size_t n = 4, d = 4;
  const Utility2D u(
      [](std::uint32_t rows, std::uint32_t cols) {
        const std::uint32_t key = (rows << 8) | cols;
        return random_table_value(99, key);
      },
      0.0, true);
  const Matrix psi = exact_2d_shapley(u, n, d);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) total += psi(i, j);
  const double expect =
      u((1u << n) - 1, (1u << d) - 1) - u((1u << n) - 1, 0) - u(0, (1u << d) - 1) + u(0, 0);
  CHECK(total == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("default empty-coalition handling pins boundary values to zero") {
  std::atomic<int> empty_calls{0};
  const Utility2D u([&](std::uint32_t rows, std::uint32_t cols) {
    if (rows == 0 || cols == 0) ++empty_calls;
    return 1.0;  // constant everywhere else
  });
  CHECK(u(0, 5) == 0.0);
  CHECK(u(5, 0) == 0.0);
  CHECK(u(0, 0) == 0.0);
  CHECK(empty_calls.load() == 0);
  // u is then the "unanimity-free" constant game with a cliff at the empty
  // sets; the cliff splits evenly: total = u(full,full) - 0 - 0 + 0 = 1
  const Matrix psi = exact_2d_shapley(u, 2, 2);
  double total = 0.0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) total += psi(i, j);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-13));

  const Utility2D delegated([](std::uint32_t, std::uint32_t) { return 1.0; }, 0.0, true);
  const Matrix flat = exact_2d_shapley(delegated, 2, 2);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(flat(i, j)) <= 1e-15);
}

TEST_CASE("memoization returns identical values without re-calling") {
  std::atomic<int> calls{0};
  const Utility1D u([&](std::uint32_t mask) {
    ++calls;
    return random_table_value(5, mask);
  });
  const double first = u(13);
  const double again = u(13);
  CHECK(first == again);
  CHECK(calls.load() == 1);

  std::atomic<int> calls2{0};
  const Utility2D u2([&](std::uint32_t rows, std::uint32_t cols) {
    ++calls2;
    return static_cast<double>(rows * 100 + cols);
  });
  const double a = u2(3, 5);
  CHECK(u2(3, 5) == a);
  CHECK(calls2.load() == 1);
  // distinct (rows, cols) pairs must not collide in the memo key
  CHECK(u2(5, 3) == 503.0);
  CHECK(calls2.load() == 2);
}

TEST_CASE("monte carlo estimates are deterministic and converge") {
  const std::size_t n = 4, d = 3;
  const Utility2D u(
      [](std::uint32_t rows, std::uint32_t cols) {
        const std::uint32_t key = (rows << 8) | cols;
        return random_table_value(31337, key);
      },
      0.0, true);
  const Matrix exact = exact_2d_shapley(u, n, d);

  const Mc2dResult a = mc_2d_shapley(u, n, d, 20000, 0);
  const Mc2dResult b = mc_2d_shapley(u, n, d, 20000, 0);
  CHECK(a.estimate == b.estimate);
  CHECK(a.standard_error == b.standard_error);

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double err = std::abs(a.estimate(i, j) - exact(i, j));
      CHECK(err <= 0.05);
      CHECK(err <= 5.0 * std::max(a.standard_error(i, j), 1e-6));
      CHECK(a.standard_error(i, j) > 0.0);
      CHECK(a.standard_error(i, j) < 0.05);
    }
}

TEST_CASE("monte carlo standard errors shrink like one over root samples") {
  const Utility2D u(
      [](std::uint32_t rows, std::uint32_t cols) {
        const std::uint32_t key = (rows << 8) | cols;
        return random_table_value(5150, key);
      },
      0.0, true);
  const Mc2dResult small = mc_2d_shapley(u, 3, 3, 500, 9);
  const Mc2dResult big = mc_2d_shapley(u, 3, 3, 8000, 9);
  // 16x the samples should shrink the error about 4x; allow slack
  double ratio_sum = 0.0;
  std::size_t cells = 0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      if (small.standard_error(i, j) == 0.0) continue;
      ratio_sum += big.standard_error(i, j) / small.standard_error(i, j);
      ++cells;
    }
  const double mean_ratio = ratio_sum / static_cast<double>(cells);
  CHECK(mean_ratio > 0.15);
  CHECK(mean_ratio < 0.45);
}

TEST_CASE("single-sample estimates report zero standard error") {
  const Utility2D u([](std::uint32_t rows, std::uint32_t cols) {
    return static_cast<double>(std::popcount(rows) * std::popcount(cols));
  });
  const Mc2dResult r = mc_2d_shapley(u, 2, 2, 1, 4);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(r.standard_error(i, j) == 0.0);
}

TEST_CASE("oracle size guards reject oversized games") {
  const Utility1D u1([](std::uint32_t) { return 0.0; });
  CHECK_THROWS_AS(exact_data_shapley(u1, 13), ComputeError);
  CHECK_THROWS_AS(exact_data_shapley(u1, 0), ComputeError);

  const Utility2D u2([](std::uint32_t, std::uint32_t) { return 0.0; });
  CHECK_THROWS_AS(exact_2d_shapley(u2, 7, 3), ComputeError);
  CHECK_THROWS_AS(exact_2d_shapley(u2, 3, 7), ComputeError);
  CHECK_THROWS_AS(exact_2d_shapley(u2, 0, 3), ComputeError);
  CHECK_THROWS_AS(mc_2d_shapley(u2, 3, 3, 0, 1), ComputeError);
}
