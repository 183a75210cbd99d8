// Segmentation overlap scores and classification confusion metrics,
// including the zero-denominator conventions.
#include "doctest.h"

#include <algorithm>
#include <vector>

#include "core/common.hpp"
#include "core/metrics.hpp"
#include "core/rng.hpp"
#include "core/volume.hpp"

using namespace voxpipe;

namespace {

MaskVolume mask_of(Dims3 d, const std::vector<uint8_t>& v) {
  MaskVolume m;
  m.dims = d;
  m.data = v;
  return m;
}

}  // namespace

TEST_CASE("segmentation scores follow the confusion-count definitions") {
  Dims3 d{2, 2, 1};
  auto a = mask_of(d, {1, 1, 0, 0});
  auto b = mask_of(d, {1, 0, 1, 0});
  // tp=1, fp=1, fn=1: every score is 1/2.
  SegScores s = seg_scores(a, b);
  CHECK(s.dsc == doctest::Approx(0.5));
  CHECK(s.precision == doctest::Approx(0.5));
  CHECK(s.sensitivity == doctest::Approx(0.5));

  SegScores same = seg_scores(a, a);
  CHECK(same.dsc == 1.0);
  CHECK(same.precision == 1.0);
  CHECK(same.sensitivity == 1.0);

  auto disj = mask_of(d, {0, 0, 1, 1});
  SegScores none = seg_scores(a, disj);
  CHECK(none.dsc == 0.0);
  CHECK(none.precision == 0.0);
  CHECK(none.sensitivity == 0.0);
}

TEST_CASE("segmentation scores handle empty masks by convention") {
  Dims3 d{3, 1, 1};
  auto empty = mask_of(d, {0, 0, 0});
  auto full = mask_of(d, {1, 1, 1});

  SegScores both = seg_scores(empty, empty);
  CHECK(both.dsc == 1.0);
  CHECK(both.precision == 1.0);
  CHECK(both.sensitivity == 1.0);

  SegScores miss = seg_scores(empty, full);
  CHECK(miss.dsc == 0.0);
  CHECK(miss.precision == 0.0);
  CHECK(miss.sensitivity == 0.0);

  SegScores ghost = seg_scores(full, empty);
  CHECK(ghost.dsc == 0.0);
  CHECK(ghost.precision == 0.0);
  CHECK(ghost.sensitivity == 0.0);
}

TEST_CASE("segmentation dsc equals f1 of the voxel confusion counts") {
  Rng rng(17);
  for (int it = 0; it < 30; ++it) {
    Dims3 d{1 + static_cast<int>(rng.uniform_int(6)),
            1 + static_cast<int>(rng.uniform_int(6)),
            1 + static_cast<int>(rng.uniform_int(4))};
    const size_t n = static_cast<size_t>(d.x) * d.y * d.z;
    std::vector<uint8_t> pv(n), tv(n);
    std::vector<int> pi(n), ti(n);
    for (size_t i = 0; i < n; ++i) {
      pv[i] = rng.uniform() < 0.4 ? 1 : 0;
      tv[i] = rng.uniform() < 0.4 ? 1 : 0;
      pi[i] = pv[i];
      ti[i] = tv[i];
    }
    SegScores s = seg_scores(mask_of(d, pv), mask_of(d, tv));
    ClsScores c = cls_scores(pi, ti);
    CHECK(s.dsc <= 1.0);
    bool pred_empty = std::count(pv.begin(), pv.end(), 1) == 0;
    bool truth_empty = std::count(tv.begin(), tv.end(), 1) == 0;
    if (!(pred_empty && truth_empty)) {
      CHECK(s.dsc == doctest::Approx(c.f1).epsilon(1e-12));
    }
  }
}

TEST_CASE("segmentation scores require matching geometry") {
  auto a = mask_of(Dims3{2, 2, 1}, {1, 0, 0, 1});
  auto b = mask_of(Dims3{4, 1, 1}, {1, 0, 0, 1});
  CHECK_THROWS_AS(seg_scores(a, b), ShapeError);
}

TEST_CASE("classification metrics on hand-tallied confusions") {
  // Perfect predictions.
  ClsScores perfect = cls_scores({1, 0, 1, 0}, {1, 0, 1, 0});
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.sensitivity == 1.0);
  CHECK(perfect.specificity == 1.0);
  CHECK(perfect.f1 == 1.0);
  CHECK_FALSE(perfect.degenerate);

  // All-positive predictions on balanced labels.
  ClsScores allpos = cls_scores({1, 1, 1, 1}, {1, 0, 1, 0});
  CHECK(allpos.accuracy == doctest::Approx(0.5));
  CHECK(allpos.sensitivity == 1.0);
  CHECK(allpos.specificity == 0.0);
  CHECK(allpos.precision == doctest::Approx(0.5));
  CHECK(allpos.f1 == doctest::Approx(2.0 / 3.0));
  CHECK_FALSE(allpos.degenerate);

  Confusion c;
  c.tp = 3;
  c.tn = 2;
  c.fp = 1;
  c.fn = 2;
  ClsScores s = cls_scores(c);
  CHECK(s.accuracy == doctest::Approx(5.0 / 8.0));
  CHECK(s.precision == doctest::Approx(3.0 / 4.0));
  CHECK(s.sensitivity == doctest::Approx(3.0 / 5.0));
  CHECK(s.specificity == doctest::Approx(2.0 / 3.0));
  CHECK(s.f1 == doctest::Approx(2.0 * 0.75 * 0.6 / 1.35));
}

TEST_CASE("classification metrics flag zero denominators instead of NaN") {
  // No positives anywhere: precision and sensitivity are 0/0.
  ClsScores s = cls_scores({0, 0, 0}, {0, 0, 0});
  CHECK(s.degenerate);
  CHECK(s.accuracy == 1.0);
  CHECK(s.precision == 0.0);
  CHECK(s.sensitivity == 0.0);
  CHECK(s.specificity == 1.0);
  CHECK(s.f1 == 0.0);

  // No negatives anywhere: specificity is 0/0.
  ClsScores t = cls_scores({1, 1}, {1, 1});
  CHECK(t.degenerate);
  CHECK(t.specificity == 0.0);
  CHECK(t.accuracy == 1.0);
}

TEST_CASE("probability thresholding keeps the boundary on the positive side") {
  std::vector<int> labels = threshold_labels({0.9, 0.4, 0.6, 0.2});
  CHECK(labels == std::vector<int>{1, 0, 1, 0});
  ClsScores s = cls_scores(labels, {1, 0, 1, 0});
  CHECK(s.accuracy == 1.0);

  CHECK(threshold_labels({0.5}) == std::vector<int>{1});
  CHECK(threshold_labels({0.499999}) == std::vector<int>{0});
  CHECK(threshold_labels({0.2, 0.8}, 0.9) == std::vector<int>{0, 0});
}

TEST_CASE("confusion counting rejects mismatched lengths") {
  CHECK_THROWS_AS(confusion_counts({1, 0}, {1, 0, 1}), ShapeError);
}
