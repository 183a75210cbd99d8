#pragma once

#include <string>
#include <vector>

#include "core/phantom.hpp"
#include "core/prep.hpp"
#include "core/train.hpp"

namespace voxpipe {

struct DataConfig {
  int cases = 587;
  PhantomConfig phantom;
};

struct PrepConfig {
  WindowParams window;
  double spacing_xy = 1.6;
  double spacing_z = 3.0;
  int crop_xy = 160;
};

struct RunConfig {
  uint64_t seed = 1;
  int threads = 0;  // 0 keeps the environment/default thread count
  std::string out_dir = "out";
  DataConfig data;
  PrepConfig prep;
  SegTrainConfig seg;
  ClsTrainConfig cls;

  std::string json_text;  // merged settings, for provenance dumps
};

// Defaults, overlaid with the JSON file (empty path keeps defaults) and
// then with key=value overrides on dotted paths. Unknown keys and type
// mismatches are rejected.
RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides);

std::string default_config_json();

}  // namespace voxpipe
