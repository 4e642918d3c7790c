#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dispute {

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  long n_resamples = 0;
  std::uint64_t seed = 0;
};

// Tie-averaged (fractional) ranks, 1-based.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> x, std::span<const double> y);

// Spearman rank correlation; rho only.
double spearman_rho(std::span<const double> x, std::span<const double> y);

// Spearman rho plus a two-sided Monte-Carlo permutation p-value (y is
// permuted). Deterministic for a fixed seed and independent of --threads.
TestResult spearman(std::span<const double> x, std::span<const double> y,
                    long n_resamples = 10000, std::uint64_t seed = 0, int threads = 1);

double cohens_kappa(std::span<const int> a, std::span<const int> b);

// log2((count_xy/n) / ((count_x/n)(count_y/n))).
double pmi(long count_xy, long count_x, long count_y, long n);

// Two-sided paired permutation (sign-flip) test on the mean difference.
TestResult paired_permutation_test(std::span<const double> scores_a,
                                   std::span<const double> scores_b,
                                   long n_resamples = 10000, std::uint64_t seed = 0,
                                   int threads = 1);

}  // namespace dispute
