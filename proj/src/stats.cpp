#include "dispute/stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <thread>

#include "dispute/error.hpp"
#include "dispute/rng.hpp"

namespace dispute {

namespace {

// Sums hit counts over [0, n_resamples) with one derived seed per resample,
// so the result is identical for any thread count.
long count_hits(long n_resamples, int threads,
                const std::function<bool(std::uint64_t resample_seed)>& is_hit) {
  threads = std::max(1, threads);
  if (threads == 1) {
    long hits = 0;
    for (long r = 0; r < n_resamples; ++r) {
      if (is_hit(r)) ++hits;
    }
    return hits;
  }
  std::vector<long> partial(threads, 0);
  std::vector<std::thread> workers;
  for (int t = 0; t < threads; ++t) {
    workers.emplace_back([&, t]() {
      for (long r = t; r < n_resamples; r += threads) {
        if (is_hit(r)) ++partial[t];
      }
    });
  }
  for (auto& w : workers) w.join();
  return std::accumulate(partial.begin(), partial.end(), 0L);
}

double centered_dot(std::span<const double> a, std::span<const double> b, double mean_a,
                    double mean_b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - mean_a) * (b[i] - mean_b);
  return sum;
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("pearson: length mismatch");
  if (x.size() < 2) throw Error("pearson: need at least 2 observations");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  const double sxy = centered_dot(x, y, mx, my);
  const double sxx = centered_dot(x, x, mx, mx);
  const double syy = centered_dot(y, y, my, my);
  if (sxx == 0.0 || syy == 0.0) throw Error("pearson: constant input");
  return sxy / std::sqrt(sxx * syy);
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("spearman: length mismatch");
  if (x.size() < 3) throw Error("spearman: need at least 3 observations");
  std::vector<double> rx = average_ranks(x);
  std::vector<double> ry = average_ranks(y);
  return pearson(rx, ry);
}

TestResult spearman(std::span<const double> x, std::span<const double> y, long n_resamples,
                    std::uint64_t seed, int threads) {
  const double rho = spearman_rho(x, y);
  if (n_resamples < 1) throw Error("spearman: n_resamples must be >= 1");
  std::vector<double> rx = average_ranks(x);
  std::vector<double> ry = average_ranks(y);
  const double mx = mean_of(rx);
  const double sxx = centered_dot(rx, rx, mx, mx);
  const double syy = centered_dot(ry, ry, mx, mx);  // ranks share the mean
  const double denom = std::sqrt(sxx * syy);
  const double threshold = std::abs(rho) - 1e-12;

  long hits = count_hits(n_resamples, threads, [&](std::uint64_t r) {
    Rng rng(derive_seed(seed, r + 1));
    std::vector<double> perm = ry;
    rng.shuffle(perm);
    double rho_p = centered_dot(rx, perm, mx, mx) / denom;
    return std::abs(rho_p) >= threshold;
  });

  TestResult result;
  result.statistic = rho;
  result.p_value = static_cast<double>(1 + hits) / static_cast<double>(n_resamples + 1);
  result.n_resamples = n_resamples;
  result.seed = seed;
  return result;
}

double cohens_kappa(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw Error("cohens_kappa: length mismatch");
  if (a.empty()) throw Error("cohens_kappa: empty input");
  const double n = static_cast<double>(a.size());
  std::map<int, long> count_a, count_b;
  long agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++count_a[a[i]];
    ++count_b[b[i]];
    if (a[i] == b[i]) ++agree;
  }
  const double p_o = static_cast<double>(agree) / n;
  double p_e = 0.0;
  for (const auto& [label, ca] : count_a) {
    auto it = count_b.find(label);
    if (it != count_b.end()) {
      p_e += (static_cast<double>(ca) / n) * (static_cast<double>(it->second) / n);
    }
  }
  if (std::abs(1.0 - p_e) < 1e-12)
    throw Error("cohens_kappa: expected agreement is 1, kappa undefined");
  return (p_o - p_e) / (1.0 - p_e);
}

double pmi(long count_xy, long count_x, long count_y, long n) {
  if (n < 1) throw Error("pmi: n must be >= 1");
  if (count_x < 1 || count_y < 1) throw Error("pmi: marginal counts must be >= 1");
  if (count_xy < 1) throw Error("pmi: zero joint count, PMI undefined");
  const double p_xy = static_cast<double>(count_xy) / static_cast<double>(n);
  const double p_x = static_cast<double>(count_x) / static_cast<double>(n);
  const double p_y = static_cast<double>(count_y) / static_cast<double>(n);
  return std::log2(p_xy / (p_x * p_y));
}

TestResult paired_permutation_test(std::span<const double> scores_a,
                                   std::span<const double> scores_b, long n_resamples,
                                   std::uint64_t seed, int threads) {
  if (scores_a.size() != scores_b.size())
    throw Error("paired_permutation_test: length mismatch");
  if (scores_a.empty()) throw Error("paired_permutation_test: empty input");
  if (n_resamples < 1) throw Error("paired_permutation_test: n_resamples must be >= 1");
  const std::size_t n = scores_a.size();
  std::vector<double> diff(n);
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = scores_a[i] - scores_b[i];
    scale = std::max(scale, std::abs(diff[i]));
  }
  const double observed =
      std::accumulate(diff.begin(), diff.end(), 0.0) / static_cast<double>(n);
  const double threshold = std::abs(observed) - 1e-12 * std::max(scale, 1e-300);

  long hits = count_hits(n_resamples, threads, [&](std::uint64_t r) {
    Rng rng(derive_seed(seed, r + 1));
    double sum = 0.0;
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i % 64 == 0) bits = rng.next();
      sum += ((bits >> (i % 64)) & 1u) ? diff[i] : -diff[i];
    }
    return std::abs(sum / static_cast<double>(n)) >= threshold;
  });

  TestResult result;
  result.statistic = observed;
  result.p_value = static_cast<double>(1 + hits) / static_cast<double>(n_resamples + 1);
  result.n_resamples = n_resamples;
  result.seed = seed;
  return result;
}

}  // namespace dispute
