#include "core/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "core/parallel.hpp"

namespace voxpipe {

namespace {

// Separable Gaussian blur along one axis, reflect-free (zero) borders.
void blur_axis(std::vector<float>& f, Dims3 d, int axis, double sigma) {
  int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<size_t>(i + radius)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;

  std::vector<float> out(f.size());
  const int64_t step = axis == 0 ? 1 : axis == 1 ? d.x : d.x * d.y;
  const int64_t extent = axis == 0 ? d.x : axis == 1 ? d.y : d.z;
  for (int64_t z = 0; z < d.z; ++z) {
    for (int64_t y = 0; y < d.y; ++y) {
      for (int64_t x = 0; x < d.x; ++x) {
        int64_t idx = voxel_index(d, x, y, z);
        int64_t pos = axis == 0 ? x : axis == 1 ? y : z;
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          int64_t p = pos + i;
          if (p < 0 || p >= extent) continue;
          acc += k[static_cast<size_t>(i + radius)] * f[static_cast<size_t>(idx + i * step)];
        }
        out[static_cast<size_t>(idx)] = static_cast<float>(acc);
      }
    }
  }
  f.swap(out);
}

float sample_trilinear(const std::vector<float>& v, Dims3 d, double x, double y,
                       double z) {
  int64_t x0 = static_cast<int64_t>(std::floor(x));
  int64_t y0 = static_cast<int64_t>(std::floor(y));
  int64_t z0 = static_cast<int64_t>(std::floor(z));
  double fx = x - x0, fy = y - y0, fz = z - z0;
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        int64_t xi = x0 + dx, yi = y0 + dy, zi = z0 + dz;
        if (xi < 0 || xi >= d.x || yi < 0 || yi >= d.y || zi < 0 || zi >= d.z) continue;
        double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy) * (dz ? fz : 1.0 - fz);
        acc += w * v[static_cast<size_t>(voxel_index(d, xi, yi, zi))];
      }
    }
  }
  return static_cast<float>(acc);
}

uint8_t sample_nearest(const std::vector<uint8_t>& v, Dims3 d, double x, double y,
                       double z) {
  int64_t xi = static_cast<int64_t>(std::llround(x));
  int64_t yi = static_cast<int64_t>(std::llround(y));
  int64_t zi = static_cast<int64_t>(std::llround(z));
  if (xi < 0 || xi >= d.x || yi < 0 || yi >= d.y || zi < 0 || zi >= d.z) return 0;
  return v[static_cast<size_t>(voxel_index(d, xi, yi, zi))];
}

}  // namespace

std::pair<Volume, MaskVolume> augment_pair(const Volume& image, const MaskVolume& mask,
                                           const AugmentConfig& cfg, Rng rng) {
  if (image.dims.x != mask.dims.x || image.dims.y != mask.dims.y ||
      image.dims.z != mask.dims.z) {
    throw ShapeError("augment_pair: image and mask dims differ");
  }
  const Dims3 d = image.dims;
  const int64_t count = d.count();

  // Draw every parameter up front so the stream layout is stable.
  const double theta = rng.uniform(-cfg.max_rot_deg, cfg.max_rot_deg) *
                       std::numbers::pi / 180.0;
  const bool fx = cfg.flip_x && rng.bernoulli(0.5);
  const bool fy = cfg.flip_y && rng.bernoulli(0.5);
  const double gain = rng.uniform(cfg.gain_lo, cfg.gain_hi);
  const double gamma = rng.uniform(cfg.gamma_lo, cfg.gamma_hi);

  std::vector<float> disp[3];
  if (cfg.elastic_alpha > 0.0) {
    for (auto& f : disp) {
      f.resize(static_cast<size_t>(count));
      for (int64_t i = 0; i < count; ++i) {
        f[static_cast<size_t>(i)] = static_cast<float>(rng.uniform(-1.0, 1.0));
      }
      for (int axis = 0; axis < 3; ++axis) blur_axis(f, d, axis, cfg.elastic_sigma);
    }
    // Smoothing shrinks the noise; rescale so the largest component
    // magnitude equals alpha voxels.
    float peak = 0.0f;
    for (const auto& f : disp) {
      for (float v : f) peak = std::max(peak, std::fabs(v));
    }
    if (peak > 0.0f) {
      const float s = static_cast<float>(cfg.elastic_alpha) / peak;
      for (auto& f : disp) {
        for (float& v : f) v *= s;
      }
    }
  }

  Volume out_img = make_volume(d, image.spacing, image.kind);
  out_img.meta = image.meta;
  MaskVolume out_mask = make_mask(d, mask.spacing);

  const double cx = 0.5 * (d.x - 1), cy = 0.5 * (d.y - 1);
  const double ct = std::cos(theta), st = std::sin(theta);

  parallel_for(d.z, [&](int64_t z0, int64_t z1) {
    for (int64_t z = z0; z < z1; ++z) {
      for (int64_t y = 0; y < d.y; ++y) {
        for (int64_t x = 0; x < d.x; ++x) {
          const size_t idx = static_cast<size_t>(voxel_index(d, x, y, z));
          // Inverse map: flip first, then rotate about the slice center,
          // then offset by the elastic field drawn at the output voxel.
          double sx = fx ? (d.x - 1 - x) : x;
          double sy = fy ? (d.y - 1 - y) : y;
          double rx = ct * (sx - cx) + st * (sy - cy) + cx;
          double ry = -st * (sx - cx) + ct * (sy - cy) + cy;
          double sz = z;
          if (!disp[0].empty()) {
            rx += disp[0][idx];
            ry += disp[1][idx];
            sz += disp[2][idx];
          }
          float v = sample_trilinear(image.data, d, rx, ry, sz);
          double g = gain * std::pow(std::max(0.0, static_cast<double>(v)), gamma);
          out_img.data[idx] = static_cast<float>(std::clamp(g, 0.0, 1.0));
          out_mask.data[idx] = sample_nearest(mask.data, d, rx, ry, sz);
        }
      }
    }
  });
  return {std::move(out_img), std::move(out_mask)};
}

}  // namespace voxpipe
