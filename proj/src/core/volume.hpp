#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace voxpipe {

class UnsupportedOrientation : public VoxError {
 public:
  explicit UnsupportedOrientation(const std::string& what) : VoxError(what) {}
};

// Intensity semantics travel with the volume so pipeline stages can
// enforce their preconditions (window expects hu, nets expect windowed).
enum class VolumeKind { raw, hu, windowed };

enum class Orientation { HFS, FFS, HFP, FFP };

Orientation orientation_from_string(const std::string& s);
std::string orientation_to_string(Orientation o);

struct ScanMeta {
  double rescale_slope = 1.0;
  double rescale_intercept = 0.0;
  std::string group;  // cohort group tag, empty when unknown
  int label = -1;     // TAA label, -1 when unknown
  Orientation orientation = Orientation::HFS;
};

struct Volume {
  Dims3 dims;
  Spacing3 spacing;  // mm per voxel
  VolumeKind kind = VolumeKind::raw;
  ScanMeta meta;
  std::vector<float> data;  // x fastest, then y, then z

  float& at(int64_t x, int64_t y, int64_t z) { return data[voxel_index(dims, x, y, z)]; }
  float at(int64_t x, int64_t y, int64_t z) const { return data[voxel_index(dims, x, y, z)]; }
  void validate() const;
};

struct MaskVolume {
  Dims3 dims;
  Spacing3 spacing;
  std::vector<uint8_t> data;  // strictly 0/1

  uint8_t& at(int64_t x, int64_t y, int64_t z) { return data[voxel_index(dims, x, y, z)]; }
  uint8_t at(int64_t x, int64_t y, int64_t z) const { return data[voxel_index(dims, x, y, z)]; }
  void validate() const;
  int64_t foreground_count() const;
};

Volume make_volume(Dims3 dims, Spacing3 spacing, VolumeKind kind, float fill = 0.0f);
MaskVolume make_mask(Dims3 dims, Spacing3 spacing, uint8_t fill = 0);

// raw -> HU via the DICOM rescale pair carried in meta.
Volume hu_convert(const Volume& v);

// Reorients to head-first supine by axis flips: FFS flips x,z; HFP
// flips x,y; FFP flips y,z (each is a 180-degree rotation about a
// patient axis). Involution: applying the flip pair twice is identity.
Volume reorient_hfs(const Volume& v);
MaskVolume reorient_hfs(const MaskVolume& m, Orientation o);

}  // namespace voxpipe
