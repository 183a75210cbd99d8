#include "core/metrics.hpp"

#include "core/common.hpp"

namespace voxpipe {

SegScores seg_scores(const MaskVolume& pred, const MaskVolume& truth) {
  if (pred.dims.x != truth.dims.x || pred.dims.y != truth.dims.y ||
      pred.dims.z != truth.dims.z) {
    throw ShapeError("seg_scores: mask dims differ");
  }
  int64_t tp = 0, fp = 0, fn = 0;
  const size_t n = pred.data.size();
  for (size_t i = 0; i < n; ++i) {
    bool p = pred.data[i] != 0, t = truth.data[i] != 0;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
  }
  SegScores s;
  if (tp + fp + fn == 0) {
    s.dsc = s.precision = s.sensitivity = 1.0;
    return s;
  }
  s.dsc = 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
  s.precision = tp + fp > 0 ? tp / static_cast<double>(tp + fp) : 0.0;
  s.sensitivity = tp + fn > 0 ? tp / static_cast<double>(tp + fn) : 0.0;
  return s;
}

Confusion confusion_counts(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size()) throw ShapeError("confusion_counts: size mismatch");
  Confusion c;
  for (size_t i = 0; i < pred.size(); ++i) {
    bool p = pred[i] != 0, t = truth[i] != 0;
    if (p && t) ++c.tp;
    else if (!p && !t) ++c.tn;
    else if (p) ++c.fp;
    else ++c.fn;
  }
  return c;
}

ClsScores cls_scores(const Confusion& c) {
  ClsScores s;
  auto ratio = [&s](int64_t num, int64_t den) {
    if (den == 0) {
      s.degenerate = true;
      return 0.0;
    }
    return num / static_cast<double>(den);
  };
  s.accuracy = ratio(c.tp + c.tn, c.total());
  s.precision = ratio(c.tp, c.tp + c.fp);
  s.sensitivity = ratio(c.tp, c.tp + c.fn);
  s.specificity = ratio(c.tn, c.tn + c.fp);
  double pr = s.precision + s.sensitivity;
  s.f1 = pr > 0 ? 2.0 * s.precision * s.sensitivity / pr : 0.0;
  return s;
}

ClsScores cls_scores(const std::vector<int>& pred, const std::vector<int>& truth) {
  return cls_scores(confusion_counts(pred, truth));
}

std::vector<int> threshold_labels(const std::vector<double>& probs, double thresh) {
  std::vector<int> out(probs.size());
  for (size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] >= thresh ? 1 : 0;
  return out;
}

}  // namespace voxpipe
