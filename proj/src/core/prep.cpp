#include "core/prep.hpp"

#include <algorithm>
#include <cmath>

namespace voxpipe {

namespace {

int64_t resample_extent(int64_t n, double s_in, double s_out) {
  int64_t out = static_cast<int64_t>(std::llround(n * s_in / s_out));
  if (out < 1) throw ShapeError("resampling collapses an axis to zero voxels");
  return out;
}

// Index map of the nearest-center rule, shared by volume and mask so
// image and label stay aligned.
std::vector<int64_t> nn_map(int64_t out_n, int64_t in_n, double scale) {
  std::vector<int64_t> map(static_cast<size_t>(out_n));
  for (int64_t j = 0; j < out_n; ++j) {
    int64_t src = static_cast<int64_t>(std::floor((j + 0.5) * scale));
    map[static_cast<size_t>(j)] = std::clamp<int64_t>(src, 0, in_n - 1);
  }
  return map;
}

template <typename T>
std::vector<T> resample_data(const std::vector<T>& src, const Dims3& in,
                             const Dims3& out, const Spacing3& s_in,
                             const Spacing3& s_out) {
  auto mx = nn_map(out.x, in.x, s_out.x / s_in.x);
  auto my = nn_map(out.y, in.y, s_out.y / s_in.y);
  auto mz = nn_map(out.z, in.z, s_out.z / s_in.z);
  std::vector<T> dst(static_cast<size_t>(out.count()));
  for (int64_t z = 0; z < out.z; ++z) {
    for (int64_t y = 0; y < out.y; ++y) {
      const T* srow = &src[static_cast<size_t>(voxel_index(in, 0, my[y], mz[z]))];
      T* drow = &dst[static_cast<size_t>(voxel_index(out, 0, y, z))];
      for (int64_t x = 0; x < out.x; ++x) drow[x] = srow[mx[x]];
    }
  }
  return dst;
}

template <typename T>
std::vector<T> crop_pad_data(const std::vector<T>& src, const Dims3& in,
                             int64_t size, T fill) {
  Dims3 out{size, size, in.z};
  std::vector<T> dst(static_cast<size_t>(out.count()), fill);
  // Overlap window between source and destination, centered; the extra
  // voxel of an odd remainder sits on the high side.
  int64_t src_x0 = std::max<int64_t>(0, (in.x - size) / 2);
  int64_t dst_x0 = std::max<int64_t>(0, (size - in.x) / 2);
  int64_t nx = std::min(in.x, size);
  int64_t src_y0 = std::max<int64_t>(0, (in.y - size) / 2);
  int64_t dst_y0 = std::max<int64_t>(0, (size - in.y) / 2);
  int64_t ny = std::min(in.y, size);
  for (int64_t z = 0; z < in.z; ++z) {
    for (int64_t y = 0; y < ny; ++y) {
      const T* srow = &src[static_cast<size_t>(voxel_index(in, src_x0, src_y0 + y, z))];
      T* drow = &dst[static_cast<size_t>(voxel_index(out, dst_x0, dst_y0 + y, z))];
      std::copy(srow, srow + nx, drow);
    }
  }
  return dst;
}

template <typename T>
std::vector<T> reshape_z_data(const std::vector<T>& src, const Dims3& in,
                              int64_t target_z) {
  auto mz = nn_map(target_z, in.z, static_cast<double>(in.z) / static_cast<double>(target_z));
  Dims3 out{in.x, in.y, target_z};
  std::vector<T> dst(static_cast<size_t>(out.count()));
  int64_t plane = in.x * in.y;
  for (int64_t z = 0; z < target_z; ++z) {
    const T* splane = &src[static_cast<size_t>(mz[z] * plane)];
    std::copy(splane, splane + plane, &dst[static_cast<size_t>(z * plane)]);
  }
  return dst;
}

}  // namespace

Volume window(const Volume& v, WindowParams p) {
  v.validate();
  if (v.kind != VolumeKind::hu) throw ShapeError("window expects an HU volume");
  if (p.width <= 0.0) throw ConfigError("window width must be positive");
  Volume out = v;
  out.kind = VolumeKind::windowed;
  const float lo = static_cast<float>(p.level - p.width / 2.0);
  const float inv = static_cast<float>(1.0 / p.width);
  for (float& x : out.data) {
    x = std::clamp((x - lo) * inv, 0.0f, 1.0f);
  }
  return out;
}

Volume resample_nn(const Volume& v, Spacing3 target) {
  v.validate();
  if (target.x <= 0 || target.y <= 0 || target.z <= 0) {
    throw ConfigError("target spacing must be positive");
  }
  Volume out;
  out.dims = Dims3{resample_extent(v.dims.x, v.spacing.x, target.x),
                   resample_extent(v.dims.y, v.spacing.y, target.y),
                   resample_extent(v.dims.z, v.spacing.z, target.z)};
  out.spacing = target;
  out.kind = v.kind;
  out.meta = v.meta;
  out.data = resample_data(v.data, v.dims, out.dims, v.spacing, target);
  return out;
}

MaskVolume resample_nn(const MaskVolume& m, Spacing3 target) {
  m.validate();
  if (target.x <= 0 || target.y <= 0 || target.z <= 0) {
    throw ConfigError("target spacing must be positive");
  }
  MaskVolume out;
  out.dims = Dims3{resample_extent(m.dims.x, m.spacing.x, target.x),
                   resample_extent(m.dims.y, m.spacing.y, target.y),
                   resample_extent(m.dims.z, m.spacing.z, target.z)};
  out.spacing = target;
  out.data = resample_data(m.data, m.dims, out.dims, m.spacing, target);
  return out;
}

Volume crop_or_pad_xy(const Volume& v, int64_t size, float pad_value) {
  v.validate();
  if (size <= 0) throw ConfigError("crop size must be positive");
  Volume out = v;
  out.dims = Dims3{size, size, v.dims.z};
  out.data = crop_pad_data(v.data, v.dims, size, pad_value);
  return out;
}

MaskVolume crop_or_pad_xy(const MaskVolume& m, int64_t size) {
  m.validate();
  if (size <= 0) throw ConfigError("crop size must be positive");
  MaskVolume out = m;
  out.dims = Dims3{size, size, m.dims.z};
  out.data = crop_pad_data(m.data, m.dims, size, static_cast<uint8_t>(0));
  return out;
}

Volume reshape_z(const Volume& v, int64_t target_z) {
  v.validate();
  if (target_z <= 0) throw ConfigError("target z must be positive");
  Volume out = v;
  out.dims = Dims3{v.dims.x, v.dims.y, target_z};
  out.data = reshape_z_data(v.data, v.dims, target_z);
  return out;
}

MaskVolume reshape_z(const MaskVolume& m, int64_t target_z) {
  m.validate();
  if (target_z <= 0) throw ConfigError("target z must be positive");
  MaskVolume out = m;
  out.dims = Dims3{m.dims.x, m.dims.y, target_z};
  out.data = reshape_z_data(m.data, m.dims, target_z);
  return out;
}

ZRange mask_z_range(const MaskVolume& m) {
  m.validate();
  ZRange r;
  int64_t plane = m.dims.x * m.dims.y;
  for (int64_t z = 0; z < m.dims.z; ++z) {
    const uint8_t* p = &m.data[static_cast<size_t>(z * plane)];
    bool any = false;
    for (int64_t i = 0; i < plane; ++i) {
      if (p[i]) { any = true; break; }
    }
    if (any) {
      if (r.empty) {
        r.lo = z;
        r.empty = false;
      }
      r.hi = z;
    }
  }
  if (r.empty) {
    r.lo = 0;
    r.hi = 0;
  }
  return r;
}

namespace {

template <typename V>
V trim_impl(const V& v, const ZRange& r) {
  if (r.lo < 0 || r.hi < r.lo || r.hi >= v.dims.z) {
    throw ShapeError("z range out of bounds");
  }
  V out = v;
  out.dims = Dims3{v.dims.x, v.dims.y, r.hi - r.lo + 1};
  int64_t plane = v.dims.x * v.dims.y;
  out.data.assign(v.data.begin() + static_cast<ptrdiff_t>(r.lo * plane),
                  v.data.begin() + static_cast<ptrdiff_t>((r.hi + 1) * plane));
  return out;
}

}  // namespace

Volume z_trim(const Volume& v, const ZRange& r) {
  v.validate();
  return trim_impl(v, r);
}

MaskVolume z_trim(const MaskVolume& m, const ZRange& r) {
  m.validate();
  return trim_impl(m, r);
}

}  // namespace voxpipe
