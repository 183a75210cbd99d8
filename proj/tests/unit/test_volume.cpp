// Volume/mask invariants, HU conversion, and orientation normalization.
#include "doctest.h"

#include <algorithm>
#include <vector>

#include "core/common.hpp"
#include "core/rng.hpp"
#include "core/volume.hpp"

using namespace voxpipe;

TEST_CASE("validation rejects inconsistent volumes and masks") {
  Volume v = make_volume(Dims3{2, 2, 2}, Spacing3{1, 1, 1}, VolumeKind::raw);
  CHECK_NOTHROW(v.validate());
  v.data.pop_back();
  CHECK_THROWS_AS(v.validate(), ShapeError);

  Volume bad_dims = make_volume(Dims3{2, 2, 2}, Spacing3{1, 1, 1}, VolumeKind::raw);
  bad_dims.dims.z = 0;
  CHECK_THROWS_AS(bad_dims.validate(), ShapeError);

  Volume bad_spacing = make_volume(Dims3{2, 2, 2}, Spacing3{1, 1, 1}, VolumeKind::raw);
  bad_spacing.spacing.y = -1.0;
  CHECK_THROWS_AS(bad_spacing.validate(), ShapeError);

  MaskVolume m = make_mask(Dims3{2, 2, 1}, Spacing3{1, 1, 1});
  CHECK_NOTHROW(m.validate());
  m.data[1] = 2;
  CHECK_THROWS_AS(m.validate(), ShapeError);
}

TEST_CASE("foreground count sums the mask") {
  MaskVolume m = make_mask(Dims3{3, 3, 1}, Spacing3{1, 1, 1});
  CHECK(m.foreground_count() == 0);
  m.at(0, 0, 0) = 1;
  m.at(2, 2, 0) = 1;
  CHECK(m.foreground_count() == 2);
}

TEST_CASE("hu conversion applies the rescale pair elementwise") {
  Volume v = make_volume(Dims3{3, 1, 1}, Spacing3{1, 1, 1}, VolumeKind::raw);
  v.data = {1024.0f, 100.0f, 0.0f};
  v.meta.rescale_slope = 1.0;
  v.meta.rescale_intercept = -1024.0;
  Volume hu = hu_convert(v);
  CHECK(hu.kind == VolumeKind::hu);
  CHECK(hu.data[0] == 0.0f);
  CHECK(hu.data[1] == -924.0f);
  CHECK(hu.data[2] == -1024.0f);
  CHECK(hu.dims.x == v.dims.x);
  CHECK(hu.spacing.x == v.spacing.x);

  v.meta.rescale_slope = 2.0;
  v.meta.rescale_intercept = -50.0;
  CHECK(hu_convert(v).data[1] == 150.0f);

  // Identity pair leaves the values alone.
  v.meta.rescale_slope = 1.0;
  v.meta.rescale_intercept = 0.0;
  CHECK(hu_convert(v).data == v.data);

  // Converting twice is a precondition violation.
  CHECK_THROWS_AS(hu_convert(hu), ShapeError);
}

TEST_CASE("orientation codes parse and print symmetrically") {
  for (const char* code : {"HFS", "FFS", "HFP", "FFP"}) {
    CHECK(orientation_to_string(orientation_from_string(code)) == code);
  }
  CHECK_THROWS_AS(orientation_from_string("HFDR"), UnsupportedOrientation);
  CHECK_THROWS_AS(orientation_from_string(""), UnsupportedOrientation);
}

namespace {

// 2x2x2 cube with distinct labels 0..7 so any flip is identified exactly.
Volume labeled_cube(Orientation o) {
  Volume v = make_volume(Dims3{2, 2, 2}, Spacing3{1, 1, 1}, VolumeKind::raw);
  for (size_t i = 0; i < 8; ++i) v.data[i] = static_cast<float>(i);
  v.meta.orientation = o;
  return v;
}

}  // namespace

TEST_CASE("reorientation flips the axes of each patient position") {
  // Head-first supine is already normal.
  Volume hfs = labeled_cube(Orientation::HFS);
  Volume out = reorient_hfs(hfs);
  CHECK(out.data == hfs.data);
  CHECK(out.meta.orientation == Orientation::HFS);

  // Each non-HFS position is a 180-degree rotation about one patient axis,
  // so exactly two axes reverse and handedness is preserved.
  struct Expect {
    Orientation o;
    bool fx, fy, fz;
  };
  const Expect table[] = {{Orientation::FFS, true, false, true},
                          {Orientation::HFP, true, true, false},
                          {Orientation::FFP, false, true, true}};
  for (const Expect& e : table) {
    Volume v = labeled_cube(e.o);
    Volume r = reorient_hfs(v);
    CHECK(r.meta.orientation == Orientation::HFS);
    for (int64_t z = 0; z < 2; ++z) {
      for (int64_t y = 0; y < 2; ++y) {
        for (int64_t x = 0; x < 2; ++x) {
          int64_t sx = e.fx ? 1 - x : x;
          int64_t sy = e.fy ? 1 - y : y;
          int64_t sz = e.fz ? 1 - z : z;
          CHECK(r.at(x, y, z) == v.at(sx, sy, sz));
        }
      }
    }
    // The flip pair is an involution: reapplying it restores the input.
    Volume back = r;
    back.meta.orientation = e.o;
    CHECK(reorient_hfs(back).data == v.data);
  }
}

TEST_CASE("reorientation preserves the voxel multiset on random volumes") {
  Rng rng(61);
  const Orientation codes[] = {Orientation::FFS, Orientation::HFP, Orientation::FFP};
  for (int it = 0; it < 12; ++it) {
    Dims3 d{1 + static_cast<int>(rng.uniform_int(6)),
            1 + static_cast<int>(rng.uniform_int(6)),
            1 + static_cast<int>(rng.uniform_int(6))};
    Volume v = make_volume(d, Spacing3{1, 1, 2}, VolumeKind::raw);
    for (float& x : v.data) x = static_cast<float>(rng.normal());
    v.meta.orientation = codes[it % 3];
    Volume r = reorient_hfs(v);
    CHECK(r.dims.x == d.x);
    CHECK(r.dims.y == d.y);
    CHECK(r.dims.z == d.z);
    std::vector<float> a = v.data, b = r.data;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
}

TEST_CASE("mask reorientation shares the volume's flip rules") {
  MaskVolume m = make_mask(Dims3{2, 2, 2}, Spacing3{1, 1, 1});
  m.at(0, 0, 0) = 1;  // single marked corner identifies the flip
  MaskVolume r = reorient_hfs(m, Orientation::FFS);
  CHECK(r.foreground_count() == 1);
  CHECK(r.at(1, 0, 1) == 1);  // x and z reversed

  MaskVolume same = reorient_hfs(m, Orientation::HFS);
  CHECK(same.data == m.data);
}
