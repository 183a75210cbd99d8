#pragma once

#include <string>
#include <utility>
#include <vector>

#include "core/common.hpp"
#include "core/tensor.hpp"

namespace voxpipe {

struct BadCheckpoint : IoError {
  using IoError::IoError;
};

// Named float tensors in a fixed order plus enough metadata to rebuild
// the owning network: an architecture id and the builder config as JSON.
struct Checkpoint {
  std::string arch;
  std::string config_json;
  std::vector<std::pair<std::string, nn::Tensor>> tensors;

  const nn::Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace voxpipe
