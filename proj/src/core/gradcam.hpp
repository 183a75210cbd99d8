#pragma once

#include "core/nets.hpp"
#include "core/volume.hpp"

namespace voxpipe {

struct LayerNotFound : VoxError {
  using VoxError::VoxError;
};

// Class-activation map for the mask classifier: channel weights are the
// spatial means of d(logit)/d(activation) at the deepest conv block, the
// weighted activation sum is rectified, upsampled to the input grid with
// nearest neighbor and min-max normalized to [0,1]. A constant map
// normalizes to all zeros.
Volume gradcam_map(nn::Network& net, const MaskVolume& mask);

}  // namespace voxpipe
