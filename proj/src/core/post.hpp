#pragma once

#include <cstdint>
#include <vector>

#include "core/volume.hpp"

namespace voxpipe {

// p >= threshold becomes foreground.
MaskVolume binarize(const Volume& prob, double threshold = 0.5);

struct CcResult {
  std::vector<int32_t> labels;  // 0 background; components 1..count in
                                // scan order of first voxel (z, y, x)
  int32_t count = 0;
  std::vector<int64_t> sizes;   // sizes[k-1] = voxels in component k
};

// connectivity is 6, 18 or 26.
CcResult connected_components(const MaskVolume& m, int connectivity = 26);

struct RemoveSmallReport {
  int64_t total_before = 0;
  int64_t removed_voxels = 0;
  int32_t removed_components = 0;
};

// Drops every component strictly smaller than min_fraction of the
// pre-removal foreground total (single pass, threshold fixed up front).
MaskVolume remove_small(const MaskVolume& m, double min_fraction = 0.05,
                        int connectivity = 26,
                        RemoveSmallReport* report = nullptr);

}  // namespace voxpipe
