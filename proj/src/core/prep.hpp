#pragma once

#include "core/volume.hpp"

namespace voxpipe {

struct WindowParams {
  double level = 50.0;
  double width = 400.0;
};

// HU -> [0,1] with clamping; level-width/2 maps to 0, level+width/2 to 1.
Volume window(const Volume& v, WindowParams p = {});

// Nearest-neighbor resample to the target spacing. Output extent
// round(n * s_in / s_out), erroring if any axis would collapse to zero;
// source index floor((j+0.5)*scale) clamped, i.e. the voxel whose
// center is nearest.
Volume resample_nn(const Volume& v, Spacing3 target);
MaskVolume resample_nn(const MaskVolume& m, Spacing3 target);

// Center crop/pad in x and y to size; odd remainders favor the high
// side. z untouched.
Volume crop_or_pad_xy(const Volume& v, int64_t size, float pad_value = 0.0f);
MaskVolume crop_or_pad_xy(const MaskVolume& m, int64_t size);

// Nearest-neighbor reshape along z only (fixed-depth baselines).
Volume reshape_z(const Volume& v, int64_t target_z);
MaskVolume reshape_z(const MaskVolume& m, int64_t target_z);

struct ZRange {
  int64_t lo = 0;
  int64_t hi = -1;  // inclusive
  bool empty = true;
};

// Inclusive z-extent of mask foreground; an all-zero mask yields the
// single slice {0, 0} with `empty` set as the warning flag.
ZRange mask_z_range(const MaskVolume& m);

Volume z_trim(const Volume& v, const ZRange& r);
MaskVolume z_trim(const MaskVolume& m, const ZRange& r);

}  // namespace voxpipe
