// Postprocessing: thresholding, connected components against a flood-fill
// oracle, and fraction-based small-component removal.
#include "doctest.h"

#include <numeric>
#include <vector>

#include "core/common.hpp"
#include "core/post.hpp"
#include "core/rng.hpp"
#include "core/volume.hpp"
#include "support/oracles.hpp"

using namespace voxpipe;

namespace {

MaskVolume mask_of(Dims3 d, const std::vector<uint8_t>& v) {
  MaskVolume m;
  m.dims = d;
  m.data = v;
  return m;
}

}  // namespace

TEST_CASE("binarize keeps the threshold on the foreground side") {
  Volume p = make_volume(Dims3{3, 1, 1}, Spacing3{1, 1, 1}, VolumeKind::windowed);
  p.data = {0.6f, 0.5f, 0.49f};
  MaskVolume m = binarize(p);
  CHECK(m.data == std::vector<uint8_t>{1, 1, 0});

  MaskVolume strict = binarize(p, 0.61);
  CHECK(strict.data == std::vector<uint8_t>{0, 0, 0});

  // Re-thresholding the 0/1 output changes nothing.
  Volume again = make_volume(Dims3{3, 1, 1}, Spacing3{1, 1, 1}, VolumeKind::windowed);
  for (size_t i = 0; i < m.data.size(); ++i) again.data[i] = m.data[i];
  CHECK(binarize(again).data == m.data);
}

TEST_CASE("connected components label simple hand fixtures") {
  // Solid 3x3x3 cube inside a 5x5x5 volume.
  MaskVolume cube = make_mask(Dims3{5, 5, 5}, Spacing3{1, 1, 1});
  for (int64_t z = 1; z <= 3; ++z) {
    for (int64_t y = 1; y <= 3; ++y) {
      for (int64_t x = 1; x <= 3; ++x) cube.at(x, y, z) = 1;
    }
  }
  CcResult r = connected_components(cube);
  CHECK(r.count == 1);
  REQUIRE(r.sizes.size() == 1);
  CHECK(r.sizes[0] == 27);

  // Two voxels touching only at a corner: one component at 26, two at 6.
  MaskVolume diag = make_mask(Dims3{2, 2, 2}, Spacing3{1, 1, 1});
  diag.at(0, 0, 0) = 1;
  diag.at(1, 1, 1) = 1;
  CHECK(connected_components(diag, 26).count == 1);
  CHECK(connected_components(diag, 18).count == 2);
  CHECK(connected_components(diag, 6).count == 2);

  // Edge contact joins at 18 but not at 6.
  MaskVolume edge = make_mask(Dims3{2, 2, 1}, Spacing3{1, 1, 1});
  edge.at(0, 0, 0) = 1;
  edge.at(1, 1, 0) = 1;
  CHECK(connected_components(edge, 18).count == 1);
  CHECK(connected_components(edge, 6).count == 2);

  // Empty mask: zero components.
  MaskVolume empty = make_mask(Dims3{4, 4, 4}, Spacing3{1, 1, 1});
  CcResult e = connected_components(empty);
  CHECK(e.count == 0);
  CHECK(e.sizes.empty());

  CHECK_THROWS_AS(connected_components(empty, 7), ConfigError);
}

TEST_CASE("connected components assign labels in scan order of first voxel") {
  // Three separated voxels; the (z, y, x) scan meets them in a fixed order.
  MaskVolume m = make_mask(Dims3{7, 7, 3}, Spacing3{1, 1, 1});
  m.at(6, 0, 0) = 1;  // first scan hit
  m.at(0, 3, 1) = 1;  // second
  m.at(3, 6, 2) = 1;  // third
  CcResult r = connected_components(m);
  CHECK(r.count == 3);
  CHECK(r.labels[static_cast<size_t>(voxel_index(m.dims, 6, 0, 0))] == 1);
  CHECK(r.labels[static_cast<size_t>(voxel_index(m.dims, 0, 3, 1))] == 2);
  CHECK(r.labels[static_cast<size_t>(voxel_index(m.dims, 3, 6, 2))] == 3);
}

TEST_CASE("connected components match the flood-fill oracle exactly") {
  Rng rng(53);
  const int connectivities[3] = {6, 18, 26};
  for (int it = 0; it < 60; ++it) {
    Dims3 d{2 + static_cast<int>(rng.uniform_int(14)),
            2 + static_cast<int>(rng.uniform_int(14)),
            1 + static_cast<int>(rng.uniform_int(10))};
    // Mixed densities cover sparse speckle through near-solid blocks.
    double density = rng.uniform(0.05, 0.75);
    MaskVolume m = make_mask(d, Spacing3{1, 1, 1});
    for (uint8_t& v : m.data) v = rng.uniform() < density ? 1 : 0;

    const int conn = connectivities[it % 3];
    CcResult got = connected_components(m, conn);
    std::vector<int32_t> want = testing::flood_fill_labels(m, conn);

    REQUIRE(got.labels == want);
    int32_t want_count = 0;
    for (int32_t l : want) want_count = std::max(want_count, l);
    REQUIRE(got.count == want_count);
    std::vector<int64_t> want_sizes(static_cast<size_t>(want_count), 0);
    for (int32_t l : want) {
      if (l > 0) ++want_sizes[static_cast<size_t>(l - 1)];
    }
    REQUIRE(got.sizes == want_sizes);
    int64_t sum = std::accumulate(got.sizes.begin(), got.sizes.end(), int64_t{0});
    CHECK(sum == m.foreground_count());
  }
}

TEST_CASE("small-component removal drops a 4 percent satellite and keeps the rest") {
  // A 96-voxel slab and a detached 4-voxel speck: 4% falls below the 5% cut.
  MaskVolume m = make_mask(Dims3{12, 10, 2}, Spacing3{1, 1, 1});
  for (int64_t y = 0; y < 8; ++y) {
    for (int64_t x = 0; x < 12; ++x) m.at(x, y, 0) = 1;  // 96 voxels
  }
  m.at(5, 9, 1) = 1;
  m.at(6, 9, 1) = 1;
  m.at(5, 9, 0) = 1;
  m.at(6, 9, 0) = 1;  // 4-voxel cluster, separated from the slab
  REQUIRE(m.foreground_count() == 100);
  REQUIRE(connected_components(m).count == 2);

  RemoveSmallReport rep;
  MaskVolume out = remove_small(m, 0.05, 26, &rep);
  CHECK(out.foreground_count() == 96);
  CHECK(rep.total_before == 100);
  CHECK(rep.removed_voxels == 4);
  CHECK(rep.removed_components == 1);
  // The slab survives untouched.
  for (int64_t y = 0; y < 8; ++y) {
    for (int64_t x = 0; x < 12; ++x) CHECK(out.at(x, y, 0) == 1);
  }
}

TEST_CASE("small-component removal keeps ties and single components") {
  // Two equal halves: both at 50%, both stay.
  MaskVolume m = make_mask(Dims3{5, 1, 1}, Spacing3{1, 1, 1});
  m.at(0, 0, 0) = 1;
  m.at(1, 0, 0) = 1;
  m.at(3, 0, 0) = 1;
  m.at(4, 0, 0) = 1;
  MaskVolume out = remove_small(m, 0.05);
  CHECK(out.data == m.data);

  // A single component never removes itself (size = 100% of total).
  MaskVolume one = make_mask(Dims3{3, 3, 1}, Spacing3{1, 1, 1});
  one.at(1, 1, 0) = 1;
  CHECK(remove_small(one, 0.99).foreground_count() == 1);

  // Strict comparison: a component exactly at the threshold survives.
  // Sizes (1, 3): cutoff 0.25 * 4 = 1, and 1 < 1 is false.
  MaskVolume tie = make_mask(Dims3{7, 1, 1}, Spacing3{1, 1, 1});
  tie.at(0, 0, 0) = 1;
  tie.at(2, 0, 0) = 1;
  tie.at(3, 0, 0) = 1;
  tie.at(4, 0, 0) = 1;
  CHECK(remove_small(tie, 0.25).foreground_count() == 4);
  CHECK(remove_small(tie, 0.26).foreground_count() == 3);

  CHECK_THROWS_AS(remove_small(m, -0.1), ConfigError);
  CHECK_THROWS_AS(remove_small(m, 1.5), ConfigError);
}

TEST_CASE("small-component removal is idempotent and only erases") {
  Rng rng(59);
  for (int it = 0; it < 20; ++it) {
    Dims3 d{2 + static_cast<int>(rng.uniform_int(12)),
            2 + static_cast<int>(rng.uniform_int(12)),
            1 + static_cast<int>(rng.uniform_int(6))};
    MaskVolume m = make_mask(d, Spacing3{1, 1, 1});
    double density = rng.uniform(0.05, 0.5);
    for (uint8_t& v : m.data) v = rng.uniform() < density ? 1 : 0;

    MaskVolume once = remove_small(m, 0.2);
    for (size_t i = 0; i < m.data.size(); ++i) {
      if (once.data[i]) CHECK(m.data[i] == 1);  // subset of the input
    }
    MaskVolume twice = remove_small(once, 0.2);
    CHECK(twice.data == once.data);
  }

  // Empty input stays empty without errors.
  MaskVolume empty = make_mask(Dims3{4, 4, 2}, Spacing3{1, 1, 1});
  RemoveSmallReport rep;
  MaskVolume out = remove_small(empty, 0.05, 26, &rep);
  CHECK(out.foreground_count() == 0);
  CHECK(rep.total_before == 0);
  CHECK(rep.removed_components == 0);
}
