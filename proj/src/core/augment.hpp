#pragma once

#include <utility>

#include "core/rng.hpp"
#include "core/volume.hpp"

namespace voxpipe {

struct AugmentConfig {
  double max_rot_deg = 10.0;   // rotation about z, drawn in +-max
  bool flip_x = true;          // each flip applied with probability 1/2
  bool flip_y = true;
  double elastic_alpha = 4.0;  // peak displacement in voxels; 0 disables
  double elastic_sigma = 2.0;  // smoothing radius in voxels
  double gain_lo = 0.9;        // multiplicative intensity jitter
  double gain_hi = 1.1;
  double gamma_lo = 0.9;       // exponent jitter on [0,1] intensities
  double gamma_hi = 1.1;
};

// Geometry (rotation, flips, elastic field) is composed into a single
// displacement and applied with one resample: trilinear for the image,
// nearest for the mask, zero fill outside. Intensity jitter touches the
// image only and keeps it inside [0,1].
std::pair<Volume, MaskVolume> augment_pair(const Volume& image, const MaskVolume& mask,
                                           const AugmentConfig& cfg, Rng rng);

}  // namespace voxpipe
