#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace voxpipe {

// Error taxonomy. Config errors map to process exit code 2, everything
// else to 1; the C API mirrors this split.
class VoxError : public std::runtime_error {
 public:
  explicit VoxError(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public VoxError {
 public:
  explicit ConfigError(const std::string& what) : VoxError(what) {}
};

class IoError : public VoxError {
 public:
  explicit IoError(const std::string& what) : VoxError(what) {}
};

class ShapeError : public VoxError {
 public:
  explicit ShapeError(const std::string& what) : VoxError(what) {}
};

// Voxel grid extents in (x, y, z) order; x is fastest in memory.
struct Dims3 {
  int64_t x = 0;
  int64_t y = 0;
  int64_t z = 0;

  int64_t count() const { return x * y * z; }
  bool operator==(const Dims3&) const = default;
};

struct Spacing3 {
  double x = 0.0;  // mm
  double y = 0.0;
  double z = 0.0;

  bool operator==(const Spacing3&) const = default;
};

inline int64_t voxel_index(const Dims3& d, int64_t x, int64_t y, int64_t z) {
  return (z * d.y + y) * d.x + x;
}

inline int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

}  // namespace voxpipe
