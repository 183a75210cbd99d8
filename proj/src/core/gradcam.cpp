#include "core/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "core/train.hpp"

namespace voxpipe {

Volume gradcam_map(nn::Network& net, const MaskVolume& mask) {
  if (net.arch() != nn::Arch::mask_classifier) {
    throw LayerNotFound("network has no class-activation tap; expected the classifier");
  }
  const bool was = net.trainable();
  net.set_trainable(true);
  net.zero_grads();

  nn::ForwardResult fwd = net.forward(to_tensor(mask));
  nn::backward(fwd.logit);
  net.set_trainable(was);

  const nn::Tensor& act = fwd.last_conv;
  const float* a = act.data();
  const float* g = act.grad_data();
  if (!g) throw VoxError("activation gradients were not produced");

  const int64_t ch = act.shape().dim(1);
  const int64_t cd = act.shape().dim(2), chh = act.shape().dim(3),
                cw = act.shape().dim(4);
  const int64_t v = cd * chh * cw;

  // Channel weights: spatial mean of the logit gradient.
  std::vector<double> alpha(static_cast<size_t>(ch));
  for (int64_t c = 0; c < ch; ++c) {
    double s = 0.0;
    const float* gc = g + c * v;
    for (int64_t i = 0; i < v; ++i) s += gc[i];
    alpha[static_cast<size_t>(c)] = s / static_cast<double>(v);
  }

  std::vector<float> cam(static_cast<size_t>(v), 0.0f);
  for (int64_t c = 0; c < ch; ++c) {
    const float* ac = a + c * v;
    const double w = alpha[static_cast<size_t>(c)];
    for (int64_t i = 0; i < v; ++i) {
      cam[static_cast<size_t>(i)] += static_cast<float>(w * ac[i]);
    }
  }
  for (float& x : cam) x = std::max(x, 0.0f);

  // Nearest-neighbor upsample to the input grid, then min-max normalize.
  Volume out = make_volume(mask.dims, mask.spacing, VolumeKind::windowed);
  const Dims3 d = mask.dims;
  auto nn_map = [](int64_t j, int64_t from, int64_t to) {
    int64_t i = static_cast<int64_t>((j + 0.5) * static_cast<double>(from) /
                                     static_cast<double>(to));
    return std::clamp<int64_t>(i, 0, from - 1);
  };
  for (int64_t z = 0; z < d.z; ++z) {
    int64_t sz = nn_map(z, cd, d.z);
    for (int64_t y = 0; y < d.y; ++y) {
      int64_t sy = nn_map(y, chh, d.y);
      for (int64_t x = 0; x < d.x; ++x) {
        int64_t sx = nn_map(x, cw, d.x);
        out.data[static_cast<size_t>(voxel_index(d, x, y, z))] =
            cam[static_cast<size_t>((sz * chh + sy) * cw + sx)];
      }
    }
  }

  float lo = out.data[0], hi = out.data[0];
  for (float x : out.data) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (hi > lo) {
    const float span = hi - lo;
    for (float& x : out.data) x = (x - lo) / span;
  } else {
    std::fill(out.data.begin(), out.data.end(), 0.0f);
  }
  return out;
}

}  // namespace voxpipe
