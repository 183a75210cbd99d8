#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/volume.hpp"

namespace voxpipe {

void write_pgm(const std::string& path, int64_t width, int64_t height,
               const std::vector<uint8_t>& gray);
void write_ppm(const std::string& path, int64_t width, int64_t height,
               const std::vector<uint8_t>& rgb);

struct MontageConfig {
  int cols = 4;
  int max_slices = 16;
};

// Grid of axial slices, top row first, y down within a tile. The image
// must be windowed to [0,1]; mask voxels tint red, heat blends toward
// yellow by its [0,1] value. Null overlays are skipped.
void write_montage(const std::string& path, const Volume& image,
                   const MaskVolume* mask, const Volume* heat,
                   MontageConfig cfg = {});

}  // namespace voxpipe
