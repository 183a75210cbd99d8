#include "core/volume.hpp"

#include <utility>

namespace voxpipe {

Orientation orientation_from_string(const std::string& s) {
  if (s == "HFS") return Orientation::HFS;
  if (s == "FFS") return Orientation::FFS;
  if (s == "HFP") return Orientation::HFP;
  if (s == "FFP") return Orientation::FFP;
  throw UnsupportedOrientation("unsupported orientation code: " + s);
}

std::string orientation_to_string(Orientation o) {
  switch (o) {
    case Orientation::HFS: return "HFS";
    case Orientation::FFS: return "FFS";
    case Orientation::HFP: return "HFP";
    case Orientation::FFP: return "FFP";
  }
  throw UnsupportedOrientation("unsupported orientation enum value");
}

void Volume::validate() const {
  if (dims.x <= 0 || dims.y <= 0 || dims.z <= 0) {
    throw ShapeError("volume dims must be positive");
  }
  if (spacing.x <= 0.0 || spacing.y <= 0.0 || spacing.z <= 0.0) {
    throw ShapeError("volume spacing must be positive");
  }
  if (static_cast<int64_t>(data.size()) != dims.count()) {
    throw ShapeError("volume data size does not match dims");
  }
}

void MaskVolume::validate() const {
  if (dims.x <= 0 || dims.y <= 0 || dims.z <= 0) {
    throw ShapeError("mask dims must be positive");
  }
  if (spacing.x <= 0.0 || spacing.y <= 0.0 || spacing.z <= 0.0) {
    throw ShapeError("mask spacing must be positive");
  }
  if (static_cast<int64_t>(data.size()) != dims.count()) {
    throw ShapeError("mask data size does not match dims");
  }
  for (uint8_t v : data) {
    if (v > 1) throw ShapeError("mask values must be 0 or 1");
  }
}

int64_t MaskVolume::foreground_count() const {
  int64_t n = 0;
  for (uint8_t v : data) n += v;
  return n;
}

Volume make_volume(Dims3 dims, Spacing3 spacing, VolumeKind kind, float fill) {
  Volume v;
  v.dims = dims;
  v.spacing = spacing;
  v.kind = kind;
  v.data.assign(static_cast<size_t>(dims.count()), fill);
  return v;
}

MaskVolume make_mask(Dims3 dims, Spacing3 spacing, uint8_t fill) {
  MaskVolume m;
  m.dims = dims;
  m.spacing = spacing;
  m.data.assign(static_cast<size_t>(dims.count()), fill);
  return m;
}

Volume hu_convert(const Volume& v) {
  if (v.kind != VolumeKind::raw) {
    throw ShapeError("hu_convert expects a raw volume");
  }
  Volume out = v;
  out.kind = VolumeKind::hu;
  const float slope = static_cast<float>(v.meta.rescale_slope);
  const float intercept = static_cast<float>(v.meta.rescale_intercept);
  for (float& x : out.data) x = slope * x + intercept;
  return out;
}

namespace {

// Reverses the listed axes in one pass.
template <typename T>
std::vector<T> flip_data(const std::vector<T>& src, const Dims3& d,
                         bool fx, bool fy, bool fz) {
  std::vector<T> dst(src.size());
  for (int64_t z = 0; z < d.z; ++z) {
    int64_t sz = fz ? d.z - 1 - z : z;
    for (int64_t y = 0; y < d.y; ++y) {
      int64_t sy = fy ? d.y - 1 - y : y;
      const T* srow = &src[static_cast<size_t>(voxel_index(d, 0, sy, sz))];
      T* drow = &dst[static_cast<size_t>(voxel_index(d, 0, y, z))];
      if (fx) {
        for (int64_t x = 0; x < d.x; ++x) drow[x] = srow[d.x - 1 - x];
      } else {
        for (int64_t x = 0; x < d.x; ++x) drow[x] = srow[x];
      }
    }
  }
  return dst;
}

void flips_for(Orientation o, bool& fx, bool& fy, bool& fz) {
  fx = fy = fz = false;
  switch (o) {
    case Orientation::HFS: break;
    case Orientation::FFS: fx = fz = true; break;
    case Orientation::HFP: fx = fy = true; break;
    case Orientation::FFP: fy = fz = true; break;
  }
}

}  // namespace

Volume reorient_hfs(const Volume& v) {
  v.validate();
  bool fx, fy, fz;
  flips_for(v.meta.orientation, fx, fy, fz);
  Volume out = v;
  out.meta.orientation = Orientation::HFS;
  if (fx || fy || fz) out.data = flip_data(v.data, v.dims, fx, fy, fz);
  return out;
}

MaskVolume reorient_hfs(const MaskVolume& m, Orientation o) {
  m.validate();
  bool fx, fy, fz;
  flips_for(o, fx, fy, fz);
  MaskVolume out = m;
  if (fx || fy || fz) out.data = flip_data(m.data, m.dims, fx, fy, fz);
  return out;
}

}  // namespace voxpipe
