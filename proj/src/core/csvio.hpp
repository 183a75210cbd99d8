#pragma once

#include <cstdio>
#include <fstream>
#include <string>

#include "core/common.hpp"

namespace voxpipe {

// Shortest round-trippable decimal form; keeps CSV output byte-stable.
inline std::string format_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline std::ofstream open_text(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  return os;
}

}  // namespace voxpipe
