#pragma once

#include <cstdint>
#include <vector>

#include "core/volume.hpp"

namespace voxpipe {

struct SegScores {
  double dsc = 0.0;
  double precision = 0.0;
  double sensitivity = 0.0;
};

// Overlap scores between binary masks. Two empty masks are a perfect
// match (all ones); any other zero denominator scores zero.
SegScores seg_scores(const MaskVolume& pred, const MaskVolume& truth);

struct Confusion {
  int64_t tp = 0, tn = 0, fp = 0, fn = 0;
  int64_t total() const { return tp + tn + fp + fn; }
};

Confusion confusion_counts(const std::vector<int>& pred, const std::vector<int>& truth);

struct ClsScores {
  double accuracy = 0.0;
  double precision = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
  bool degenerate = false;  // some denominator was zero and scored 0
};

ClsScores cls_scores(const Confusion& c);
ClsScores cls_scores(const std::vector<int>& pred, const std::vector<int>& truth);

// Probabilities become labels at the decision threshold (p >= thresh).
std::vector<int> threshold_labels(const std::vector<double>& probs, double thresh = 0.5);

}  // namespace voxpipe
