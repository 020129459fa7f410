#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <numeric>

#include "support.hpp"
#include "xnn/error.hpp"
#include "xnn/metrics.hpp"

using namespace xnn;
using xnn::testing::brute_auc;
using xnn::testing::brute_macro_f1;

TEST_CASE("macro_f1 examples") {
  std::vector<int> t{0, 0, 1, 1}, p{0, 0, 0, 0};
  CHECK(macro_f1(p, t, 2) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(std::abs(macro_f1(p, t, 2) - 1.0 / 3.0) < 1e-15);
  std::vector<int> three{0, 1, 2};
  CHECK(macro_f1(three, three, 3) == 1.0);
  CHECK(macro_f1(t, t, 2) == 1.0);
  // A class never seen anywhere still counts, and scores 0.
  CHECK(macro_f1(t, t, 3) == doctest::Approx(2.0 / 3.0));
  std::vector<int> short_pred{0};
  CHECK_THROWS_AS(macro_f1(short_pred, t, 2), DataError);
  CHECK_THROWS_AS(macro_f1(std::vector<int>{}, std::vector<int>{}, 2), DataError);
}

TEST_CASE("auc examples") {
  std::vector<int> y{0, 0, 1, 1};
  CHECK(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, y) == 0.75);
  CHECK(auc(std::vector<double>{0.1, 0.2, 0.7, 0.9}, y) == 1.0);
  CHECK(auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, y) == 0.5);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), DataError);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1}, y), DataError);
}

TEST_CASE("accuracy") {
  CHECK(accuracy(std::vector<int>{0, 1, 1, 2}, std::vector<int>{0, 1, 2, 2}) == 0.75);
}

TEST_CASE("metrics agree with brute-force oracles") {
  Rng rng(2024);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 1 + rng.below(30), c = 1 + rng.below(5);
    std::vector<int> p(n), t(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng.below(c));
      t[i] = static_cast<int>(rng.below(c));
    }
    CHECK(std::abs(macro_f1(p, t, c) - brute_macro_f1(p, t, c)) <= 1e-12);

    const std::size_t m = 2 + rng.below(40);
    std::vector<double> s(m);
    std::vector<int> y(m);
    for (std::size_t i = 0; i < m; ++i) {
      // Coarse grid so ties are common.
      s[i] = rng.below(2) ? static_cast<double>(rng.below(6)) / 5.0 : rng.uniform();
      y[i] = static_cast<int>(rng.below(2));
    }
    y[0] = 0;
    y[1] = 1;
    CHECK(std::abs(auc(s, y) - brute_auc(s, y)) <= 1e-12);
  }
}

TEST_CASE("metrics are invariant under joint permutation") {
  Rng rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 4 + rng.below(20);
    std::vector<int> p(n), t(n), y(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng.below(3));
      t[i] = static_cast<int>(rng.below(3));
      s[i] = rng.uniform();
      y[i] = static_cast<int>(i % 2);
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    std::vector<int> pp(n), tp(n), yp(n);
    std::vector<double> sp(n);
    for (std::size_t i = 0; i < n; ++i) {
      pp[i] = p[perm[i]];
      tp[i] = t[perm[i]];
      sp[i] = s[perm[i]];
      yp[i] = y[perm[i]];
    }
    CHECK(macro_f1(pp, tp, 3) == doctest::Approx(macro_f1(p, t, 3)).epsilon(1e-15));
    CHECK(auc(sp, yp) == doctest::Approx(auc(s, y)).epsilon(1e-15));
  }
}

TEST_CASE("auc complement for tie-free scores") {
  Rng rng(8);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 2 + rng.below(30);
    std::vector<double> s(n);
    std::vector<int> y(n), flipped(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.uniform() + static_cast<double>(i);  // distinct
      y[i] = static_cast<int>(rng.below(2));
    }
    y[0] = 0;
    y[n - 1] = 1;
    for (std::size_t i = 0; i < n; ++i) flipped[i] = 1 - y[i];
    CHECK(std::abs(auc(s, y) + auc(s, flipped) - 1.0) < 1e-12);
  }
}
