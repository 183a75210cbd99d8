// Friedman rank test, Nemenyi critical difference, and the chi-square tail
// helper, pinned against hand-computed fixtures.
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "core/common.hpp"
#include "core/rng.hpp"
#include "core/stats.hpp"

using namespace voxpipe;

TEST_CASE("chi-square tail helper matches closed forms") {
  // Q(1, x) = exp(-x); chi-square with df=2 has survival exp(-x/2).
  CHECK(gamma_q(1.0, 4.0) == doctest::Approx(std::exp(-4.0)).epsilon(1e-12));
  // Q(1/2, x) = erfc(sqrt(x)); chi-square with df=1.
  CHECK(gamma_q(0.5, 1.0) == doctest::Approx(std::erfc(1.0)).epsilon(1e-12));
  CHECK(gamma_q(0.5, 4.0) == doctest::Approx(std::erfc(2.0)).epsilon(1e-12));
  CHECK(gamma_q(3.0, 0.0) == 1.0);
  // Integer a has the closed form Q(n, x) = exp(-x) * sum x^k/k!, k < n;
  // x > a + 1 exercises the continued-fraction branch.
  double poisson_tail = 0.0, term = 1.0;
  for (int k = 0; k < 10; ++k) {
    poisson_tail += term;
    term *= 30.0 / (k + 1);
  }
  CHECK(gamma_q(10.0, 30.0) == doctest::Approx(std::exp(-30.0) * poisson_tail).epsilon(1e-10));
  CHECK_THROWS_AS(gamma_q(0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(gamma_q(1.0, -1.0), ConfigError);
}

TEST_CASE("friedman test reproduces the four-block three-method fixture") {
  // One method always wins, one is always middle, one always loses. Rank sums
  // are (4, 8, 12), so chi2 = 0.25 * 224 - 48 = 8 with df = 2.
  std::vector<std::vector<double>> scores = {
      {0.9, 0.5, 0.1}, {0.8, 0.6, 0.2}, {0.95, 0.7, 0.3}, {0.85, 0.55, 0.15}};
  FriedmanResult r = friedman_test(scores);
  CHECK(r.chi2 == 8.0);
  CHECK(r.df == 2);
  CHECK(r.p == doctest::Approx(std::exp(-4.0)).epsilon(1e-10));
  CHECK(r.p > 0.018);
  CHECK(r.p < 0.019);
  REQUIRE(r.mean_ranks.size() == 3);
  CHECK(r.mean_ranks[0] == doctest::Approx(1.0));
  CHECK(r.mean_ranks[1] == doctest::Approx(2.0));
  CHECK(r.mean_ranks[2] == doctest::Approx(3.0));
}

TEST_CASE("friedman test gives zero statistic for identical scores") {
  std::vector<std::vector<double>> scores(5, std::vector<double>{0.4, 0.4, 0.4, 0.4});
  FriedmanResult r = friedman_test(scores);
  CHECK(r.chi2 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.p == doctest::Approx(1.0).epsilon(1e-12));
  for (double m : r.mean_ranks) CHECK(m == doctest::Approx(2.5));
}

TEST_CASE("friedman test averages tied ranks within a block") {
  // Block 1 ties the first two methods for ranks 1 and 2 (1.5 each).
  std::vector<std::vector<double>> scores = {{5.0, 5.0, 1.0}, {2.0, 1.0, 0.5}};
  FriedmanResult r = friedman_test(scores);
  CHECK(r.mean_ranks[0] == doctest::Approx(1.25));
  CHECK(r.mean_ranks[1] == doctest::Approx(1.75));
  CHECK(r.mean_ranks[2] == doctest::Approx(3.0));
}

TEST_CASE("friedman statistic is invariant to column permutation and monotone maps") {
  Rng rng(41);
  for (int it = 0; it < 20; ++it) {
    const int n = 3 + static_cast<int>(rng.uniform_int(6));
    const int k = 2 + static_cast<int>(rng.uniform_int(4));
    std::vector<std::vector<double>> scores(n, std::vector<double>(k));
    for (auto& row : scores) {
      for (double& v : row) v = rng.uniform(0.0, 1.0);
    }
    FriedmanResult base = friedman_test(scores);

    // Shuffle method columns with one permutation applied to every block.
    std::vector<int> perm(k);
    for (int j = 0; j < k; ++j) perm[j] = j;
    for (int j = k - 1; j > 0; --j) {
      std::swap(perm[j], perm[rng.uniform_int(static_cast<uint64_t>(j + 1))]);
    }
    std::vector<std::vector<double>> shuffled(n, std::vector<double>(k));
    for (int b = 0; b < n; ++b) {
      for (int j = 0; j < k; ++j) shuffled[b][j] = scores[b][perm[j]];
    }
    FriedmanResult sh = friedman_test(shuffled);
    CHECK(sh.chi2 == doctest::Approx(base.chi2).epsilon(1e-12));

    // Strictly increasing per-block transforms leave the ranks untouched.
    std::vector<std::vector<double>> warped = scores;
    for (int b = 0; b < n; ++b) {
      const double scale = rng.uniform(0.5, 3.0);
      const double shift = rng.uniform(-2.0, 2.0);
      for (double& v : warped[b]) v = scale * std::exp(v) + shift;
    }
    FriedmanResult wr = friedman_test(warped);
    CHECK(wr.chi2 == doctest::Approx(base.chi2).epsilon(1e-12));
    CHECK(wr.p == doctest::Approx(base.p).epsilon(1e-9));
  }
}

TEST_CASE("friedman test rejects degenerate input") {
  CHECK_THROWS_AS(friedman_test({{1.0, 2.0}}), ConfigError);
  CHECK_THROWS_AS(friedman_test({{1.0}, {2.0}}), ConfigError);
  CHECK_THROWS_AS(friedman_test({{1.0, 2.0}, {1.0, 2.0, 3.0}}), ConfigError);
}

TEST_CASE("nemenyi critical difference matches the published constant") {
  // q_0.05(3) = 2.343: CD = 2.343 * sqrt(3*4 / (6*16)).
  CHECK(nemenyi_cd(3, 16) == doctest::Approx(0.8285).epsilon(1.3e-3));
  CHECK(nemenyi_cd(3, 16) == doctest::Approx(2.343 * std::sqrt(12.0 / 96.0)).epsilon(1e-12));
  CHECK(nemenyi_cd(2, 4) == doctest::Approx(1.960 / 2.0).epsilon(1e-12));
  // CD shrinks like 1/sqrt(N) and vanishes in the limit.
  CHECK(nemenyi_cd(3, 64) == doctest::Approx(0.5 * nemenyi_cd(3, 16)).epsilon(1e-12));
  CHECK(nemenyi_cd(3, 1000000000) < 1e-3);
  CHECK_THROWS_AS(nemenyi_cd(1, 10), ConfigError);
  CHECK_THROWS_AS(nemenyi_cd(11, 10), ConfigError);
  CHECK_THROWS_AS(nemenyi_cd(3, 0), ConfigError);
}

TEST_CASE("nemenyi pairs flag exactly the differences beyond the critical value") {
  // Means (1.0, 1.5, 3.0) with CD 0.83: only the third method separates.
  auto pairs = nemenyi_pairs({1.0, 1.5, 3.0}, 0.83);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0] == std::pair<int, int>(0, 2));
  CHECK(pairs[1] == std::pair<int, int>(1, 2));

  // All gaps beyond the critical value.
  auto all = nemenyi_pairs({1.0, 1.9, 3.0}, 0.83);
  CHECK(all.size() == 3);

  // Boundary is strict: a difference equal to CD is not significant.
  CHECK(nemenyi_pairs({1.0, 1.5}, 0.5).empty());
  CHECK(nemenyi_pairs({2.0, 2.0, 2.0}, 0.5).empty());
}
