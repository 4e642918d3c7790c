#include <doctest.h>

#include <cmath>
#include <vector>

#include "dispute/error.hpp"
#include "dispute/stats.hpp"

using namespace dispute;

TEST_CASE("tie-averaged ranks") {
  const std::vector<double> v = {10, 20, 20, 30};
  const auto ranks = average_ranks(v);
  REQUIRE(ranks.size() == 4);
  CHECK(ranks[0] == doctest::Approx(1.0));
  CHECK(ranks[1] == doctest::Approx(2.5));
  CHECK(ranks[2] == doctest::Approx(2.5));
  CHECK(ranks[3] == doctest::Approx(4.0));

  const std::vector<double> all_tied = {7, 7, 7};
  for (double r : average_ranks(all_tied)) CHECK(r == doctest::Approx(2.0));

  const std::vector<double> desc = {3, 2, 1};
  const auto dranks = average_ranks(desc);
  CHECK(dranks[0] == doctest::Approx(3.0));
  CHECK(dranks[2] == doctest::Approx(1.0));
}

TEST_CASE("pearson correlation") {
  const std::vector<double> x = {0, 1, 2};
  const std::vector<double> y = {0, 1, 4};
  CHECK(pearson(x, y) == doctest::Approx(2.0 * std::sqrt(3.0 / 13.0)).epsilon(1e-12));

  const std::vector<double> lin = {2, 4, 6};
  CHECK(pearson(x, lin) == doctest::Approx(1.0));
  const std::vector<double> anti = {6, 4, 2};
  CHECK(pearson(x, anti) == doctest::Approx(-1.0));

  const std::vector<double> shorter = {1, 2};
  CHECK_THROWS_AS(pearson(x, shorter), Error);
  const std::vector<double> single = {1};
  CHECK_THROWS_AS(pearson(single, single), Error);
  const std::vector<double> constant = {5, 5, 5};
  CHECK_THROWS_AS(pearson(x, constant), Error);
}

TEST_CASE("spearman rho") {
  const std::vector<double> x = {1, 2, 2, 4};
  const std::vector<double> y = {1, 3, 2, 4};
  CHECK(spearman_rho(x, y) == doctest::Approx(3.0 / std::sqrt(10.0)).epsilon(1e-12));

  const std::vector<double> up = {10, 20, 30, 40};
  const std::vector<double> mono = {1, 5, 6, 100};  // monotone, not linear
  CHECK(spearman_rho(up, mono) == doctest::Approx(1.0));
  const std::vector<double> down = {100, 6, 5, 1};
  CHECK(spearman_rho(up, down) == doctest::Approx(-1.0));

  // Matching tie patterns still give |rho| = 1.
  const std::vector<double> tx = {5, 5, 1, 1};
  const std::vector<double> ty = {0, 0, 1, 1};
  CHECK(spearman_rho(tx, ty) == doctest::Approx(-1.0));
}

TEST_CASE("spearman permutation test is seeded and thread-independent") {
  const std::vector<double> x = {1, 2, 3, 4, 5, 6, 7, 8};
  const std::vector<double> y = {2, 1, 4, 3, 6, 5, 8, 7};

  const TestResult r1 = spearman(x, y, 2000, 99, 1);
  const TestResult r2 = spearman(x, y, 2000, 99, 1);
  CHECK(r1.statistic == r2.statistic);
  CHECK(r1.p_value == r2.p_value);
  CHECK(r1.n_resamples == 2000);
  CHECK(r1.seed == 99);

  const TestResult r4 = spearman(x, y, 2000, 99, 4);
  CHECK(r4.statistic == r1.statistic);
  CHECK(r4.p_value == r1.p_value);

  // Strong monotone association on distinct values: small p, rho = 1.
  const std::vector<double> z = {3, 1, 4, 1.5, 9, 2.6, 5.3, 5.8};
  std::vector<double> z2 = z;
  for (double& v : z2) v = 2 * v + 1;
  const TestResult strong = spearman(z, z2, 4000, 7, 1);
  CHECK(strong.statistic == doctest::Approx(1.0));
  CHECK(strong.p_value < 0.05);

  // p values live in (0, 1] thanks to add-one smoothing.
  CHECK(r1.p_value > 0.0);
  CHECK(r1.p_value <= 1.0);

  const std::vector<double> too_short = {1, 2};
  CHECK_THROWS_AS(spearman(too_short, too_short, 100, 0, 1), Error);
}

TEST_CASE("cohens kappa") {
  const std::vector<int> a = {0, 0, 1, 1};
  const std::vector<int> b = {0, 1, 1, 1};
  CHECK(cohens_kappa(a, b) == doctest::Approx(0.5).epsilon(1e-12));

  const std::vector<int> same = {2, 0, 1, 2, 1};
  CHECK(cohens_kappa(same, same) == doctest::Approx(1.0));

  // Chance agreement of 1 makes kappa undefined.
  const std::vector<int> zeros = {0, 0, 0};
  CHECK_THROWS_AS(cohens_kappa(zeros, zeros), Error);

  const std::vector<int> shorter = {0, 1};
  CHECK_THROWS_AS(cohens_kappa(a, shorter), Error);
}

TEST_CASE("pointwise mutual information") {
  CHECK(pmi(2, 20, 10, 100) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(pmi(4, 20, 10, 100) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pmi(1, 20, 10, 100) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("paired permutation test") {
  const std::vector<double> a = {2, 3, 4};
  const std::vector<double> b = {1, 1, 1};
  const TestResult r = paired_permutation_test(a, b, 1000, 5, 1);
  CHECK(r.statistic == doctest::Approx(2.0));
  CHECK(r.p_value > 0.0);
  CHECK(r.p_value <= 1.0);

  // Identical samples: observed difference 0, nothing beats it, p = 1.
  const TestResult null_r = paired_permutation_test(a, a, 500, 5, 1);
  CHECK(null_r.statistic == doctest::Approx(0.0));
  CHECK(null_r.p_value == doctest::Approx(1.0));

  // Deterministic for a seed, independent of the thread count.
  const TestResult r2 = paired_permutation_test(a, b, 1000, 5, 1);
  CHECK(r2.p_value == r.p_value);
  const TestResult r4 = paired_permutation_test(a, b, 1000, 5, 4);
  CHECK(r4.p_value == r.p_value);

  // A large consistent shift on many pairs is significant.
  std::vector<double> big_a, big_b;
  for (int i = 0; i < 20; ++i) {
    big_a.push_back(i + 5.0);
    big_b.push_back(static_cast<double>(i));
  }
  CHECK(paired_permutation_test(big_a, big_b, 4000, 11, 1).p_value < 0.01);

  const std::vector<double> shorter = {1.0};
  CHECK_THROWS_AS(paired_permutation_test(a, shorter, 100, 0, 1), Error);
}
