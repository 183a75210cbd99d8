#include "core/montage.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace voxpipe {

namespace {

void write_pnm(const std::string& path, const char* magic, int64_t width,
               int64_t height, int64_t channels, const std::vector<uint8_t>& data) {
  if (width <= 0 || height <= 0 ||
      data.size() != static_cast<size_t>(width * height * channels)) {
    throw ShapeError("pnm payload does not match width * height");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << magic << "\n" << width << " " << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(data.data()),
           static_cast<std::streamsize>(data.size()));
  if (!os) throw IoError("write failed for " + path);
}

uint8_t to_byte(double v) {
  return static_cast<uint8_t>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
}

}  // namespace

void write_pgm(const std::string& path, int64_t width, int64_t height,
               const std::vector<uint8_t>& gray) {
  write_pnm(path, "P5", width, height, 1, gray);
}

void write_ppm(const std::string& path, int64_t width, int64_t height,
               const std::vector<uint8_t>& rgb) {
  write_pnm(path, "P6", width, height, 3, rgb);
}

void write_montage(const std::string& path, const Volume& image,
                   const MaskVolume* mask, const Volume* heat, MontageConfig cfg) {
  if (cfg.cols < 1 || cfg.max_slices < 1) throw ConfigError("bad montage layout");
  const Dims3 d = image.dims;
  if (mask && (mask->dims.x != d.x || mask->dims.y != d.y || mask->dims.z != d.z)) {
    throw ShapeError("montage mask dims differ from image");
  }
  if (heat && (heat->dims.x != d.x || heat->dims.y != d.y || heat->dims.z != d.z)) {
    throw ShapeError("montage heat dims differ from image");
  }

  // Evenly spaced slice picks including the first and last slice.
  const int n = static_cast<int>(std::min<int64_t>(cfg.max_slices, d.z));
  std::vector<int64_t> slices;
  for (int i = 0; i < n; ++i) {
    slices.push_back(n == 1 ? 0 : i * (d.z - 1) / (n - 1));
  }

  const int cols = std::min(cfg.cols, n);
  const int rows = (n + cols - 1) / cols;
  const int64_t w = cols * d.x;
  const int64_t h = rows * d.y;
  std::vector<uint8_t> rgb(static_cast<size_t>(w * h * 3), 0);

  for (int i = 0; i < n; ++i) {
    const int64_t z = slices[static_cast<size_t>(i)];
    const int64_t tx = (i % cols) * d.x;
    const int64_t ty = (i / cols) * d.y;
    for (int64_t y = 0; y < d.y; ++y) {
      for (int64_t x = 0; x < d.x; ++x) {
        const size_t src = static_cast<size_t>(voxel_index(d, x, y, z));
        double g = std::clamp(static_cast<double>(image.data[src]), 0.0, 1.0);
        double r = g, gg = g, b = g;
        if (heat) {
          double t = std::clamp(static_cast<double>(heat->data[src]), 0.0, 1.0);
          r = g * (1.0 - t) + t;
          gg = g * (1.0 - t) + 0.65 * t;
          b = g * (1.0 - t);
        }
        if (mask && mask->data[src]) {
          r = 1.0;
          gg *= 0.4;
          b *= 0.4;
        }
        const size_t dst = static_cast<size_t>(((ty + y) * w + tx + x) * 3);
        rgb[dst] = to_byte(r);
        rgb[dst + 1] = to_byte(gg);
        rgb[dst + 2] = to_byte(b);
      }
    }
  }
  write_ppm(path, w, h, rgb);
}

}  // namespace voxpipe
