#include "core/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/common.hpp"

namespace voxpipe {

namespace {

// Q by series for x < a+1 (via P), by Lentz continued fraction otherwise.
double gamma_q_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
  }
  double p = sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  return 1.0 - p;
}

double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double gamma_q(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw ConfigError("gamma_q needs a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  return x < a + 1.0 ? gamma_q_series(a, x) : gamma_q_cf(a, x);
}

FriedmanResult friedman_test(const std::vector<std::vector<double>>& scores) {
  const size_t n = scores.size();
  if (n < 2) throw ConfigError("friedman test needs at least 2 blocks");
  const size_t k = scores[0].size();
  if (k < 2) throw ConfigError("friedman test needs at least 2 methods");
  for (const auto& row : scores) {
    if (row.size() != k) throw ConfigError("friedman test rows must be equal length");
  }

  std::vector<double> rank_sum(k, 0.0);
  std::vector<size_t> order(k);
  for (const auto& row : scores) {
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&row](size_t a, size_t b) { return row[a] > row[b]; });
    // Tied values share the average of the ranks they span.
    size_t i = 0;
    while (i < k) {
      size_t j = i + 1;
      while (j < k && row[order[j]] == row[order[i]]) ++j;
      double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
      for (size_t t = i; t < j; ++t) rank_sum[order[t]] += avg;
      i = j;
    }
  }

  FriedmanResult r;
  double nn = static_cast<double>(n), kk = static_cast<double>(k);
  double sum_sq = 0.0;
  for (double s : rank_sum) sum_sq += s * s;
  r.chi2 = 12.0 / (nn * kk * (kk + 1.0)) * sum_sq - 3.0 * nn * (kk + 1.0);
  r.df = static_cast<int>(k) - 1;
  r.p = gamma_q(r.df / 2.0, std::max(r.chi2, 0.0) / 2.0);
  r.mean_ranks.resize(k);
  for (size_t j = 0; j < k; ++j) r.mean_ranks[j] = rank_sum[j] / nn;
  return r;
}

double nemenyi_cd(int k, int n) {
  // Studentized range upper quantiles at the 0.05 level, divided by sqrt(2).
  static const double q05[] = {1.960, 2.343, 2.569, 2.728, 2.850,
                               2.949, 3.031, 3.102, 3.164};
  if (k < 2 || k > 10) throw ConfigError("nemenyi critical values cover 2..10 methods");
  if (n < 1) throw ConfigError("nemenyi needs at least one block");
  double kk = k;
  return q05[k - 2] * std::sqrt(kk * (kk + 1.0) / (6.0 * n));
}

std::vector<std::pair<int, int>> nemenyi_pairs(const std::vector<double>& mean_ranks,
                                               double cd) {
  std::vector<std::pair<int, int>> out;
  const int k = static_cast<int>(mean_ranks.size());
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      if (std::fabs(mean_ranks[i] - mean_ranks[j]) > cd) out.emplace_back(i, j);
    }
  }
  return out;
}

}  // namespace voxpipe
