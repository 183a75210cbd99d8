#pragma once

#include <utility>
#include <vector>

namespace voxpipe {

// Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a).
// The chi-square survival function is Q(df/2, x/2).
double gamma_q(double a, double x);

struct FriedmanResult {
  double chi2 = 0.0;
  int df = 0;
  double p = 1.0;
  std::vector<double> mean_ranks;  // per method; rank 1 is the best score
};

// Friedman rank test over scores[block][method], higher scores ranking
// better. Ties within a block share the average of the tied ranks.
FriedmanResult friedman_test(const std::vector<std::vector<double>>& scores);

// Critical difference of mean ranks for pairwise comparison of k methods
// over n blocks at the 0.05 level.
double nemenyi_cd(int k, int n);

// Method index pairs (i, j), i < j, whose mean-rank difference exceeds cd.
std::vector<std::pair<int, int>> nemenyi_pairs(const std::vector<double>& mean_ranks,
                                               double cd);

}  // namespace voxpipe
