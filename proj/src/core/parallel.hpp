#pragma once

#include <cstdint>
#include <functional>

namespace voxpipe {

// Worker-count cap shared by all kernels. 0 means "hardware concurrency".
// Results are identical for any setting: each output element is written
// by exactly one worker and accumulation order inside an element is fixed.
void set_max_threads(int n);
int max_threads();

// Runs fn(begin, end) over disjoint chunks of [0, n). Chunks are
// contiguous and their boundaries depend only on n and the worker count
// actually used, never on scheduling.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace voxpipe
