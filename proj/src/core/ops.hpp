#pragma once

#include "core/tensor.hpp"

namespace voxpipe::nn {

// Per-axis triples are named (x, y, z); kernels and strides given this
// way are mapped internally onto the [N,C,D,H,W] memory order.
struct Stride3 {
  int64_t x = 1, y = 1, z = 1;
};

struct KSize3 {
  int64_t x = 1, y = 1, z = 1;
};

enum class Pad { same, valid };

// x [N,Ci,D,H,W], w [Co,Ci,kz,ky,kx], optional b [Co]. SAME pads split
// the shortfall with the extra voxel on the high side; output extent is
// ceil(in/stride) for SAME and floor((in-k)/stride)+1 for VALID.
template <typename T>
TensorT<T> conv3d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                  Stride3 stride = {}, Pad pad = Pad::same);

// Exact adjoint of the SAME conv with the given stride; output extent is
// input extent times stride per axis. w [Ci,Co,kz,ky,kx], optional b [Co].
template <typename T>
TensorT<T> conv3d_transpose(const TensorT<T>& x, const TensorT<T>& w,
                            const TensorT<T>& b, Stride3 stride = {});

// -inf SAME padding, ceil(in/stride) extent; ties keep the first window
// element in (dz, dy, dx) scan order.
template <typename T>
TensorT<T> maxpool3d(const TensorT<T>& x, KSize3 window, Stride3 stride);

// Per (n, c) normalization over the spatial extent, biased variance.
template <typename T>
TensorT<T> instance_norm(const TensorT<T>& x, const TensorT<T>& gamma,
                         const TensorT<T>& beta, double eps = 1e-5);

template <typename T>
TensorT<T> relu(const TensorT<T>& x);

template <typename T>
TensorT<T> leaky_relu(const TensorT<T>& x, double slope = 0.2);

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& x);

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b);

// [N,C,D,H,W] -> [N,C].
template <typename T>
TensorT<T> global_avg_pool3d(const TensorT<T>& x);

// x [N,Ci], w [Co,Ci], optional b [Co] -> [N,Co].
template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b);

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);

// mul * x + shift, elementwise with scalar coefficients.
template <typename T>
TensorT<T> affine(const TensorT<T>& x, double mul, double shift = 0.0);

template <typename T>
TensorT<T> scale(const TensorT<T>& x, double c) {
  return affine(x, c, 0.0);
}

// ----- losses (scalar outputs; y is a constant target) -----

// 1 - (2*sum(p*y)+s) / (sum(p)+sum(y)+s)
template <typename T>
TensorT<T> dice_loss(const TensorT<T>& p, const TensorT<T>& y, double smooth = 1e-6);

// mean of -[delta*y*(1-p)^gf*log(p) + (1-delta)*(1-y)*p^gf*log(1-p)]
// with gf = 2*gamma; logs clamped at 1e-12.
template <typename T>
TensorT<T> focal_loss(const TensorT<T>& p, const TensorT<T>& y, double delta,
                      double gamma);

// (1 - TI)^gamma with
// TI = (sum(p*y)+s) / (sum(p*y) + delta*sum((1-p)*y) + (1-delta)*sum(p*(1-y)) + s)
template <typename T>
TensorT<T> focal_tversky_loss(const TensorT<T>& p, const TensorT<T>& y,
                              double delta, double gamma, double smooth = 1e-6);

struct HybridFocalParams {
  double lambda = 0.5;
  double delta = 0.6;
  double gamma = 0.5;
  double smooth = 1e-6;
};

// lambda*focal + (1-lambda)*focal_tversky, both at the params' delta and
// gamma (focal maps its exponent to 2*gamma internally).
template <typename T>
TensorT<T> hybrid_focal(const TensorT<T>& p, const TensorT<T>& y,
                        const HybridFocalParams& params = {});

// mean of -[y*log(p) + (1-y)*log(1-p)], logs clamped at 1e-12.
template <typename T>
TensorT<T> bce(const TensorT<T>& p, const TensorT<T>& y);

// mean((x - target)^2); the LSGAN building block.
template <typename T>
TensorT<T> mse_to(const TensorT<T>& x, double target);

// ----- LSGAN compositions -----

template <typename T>
TensorT<T> lsgan_d_loss(const TensorT<T>& d_real, const TensorT<T>& d_fake) {
  return add(mse_to(d_real, 1.0), mse_to(d_fake, 0.0));
}

template <typename T>
TensorT<T> lsgan_g_adv(const TensorT<T>& d_fake) {
  return mse_to(d_fake, 1.0);
}

// g_adv + hybrid_weight * hybrid_focal(fake, target)
template <typename T>
TensorT<T> lsgan_g_total(const TensorT<T>& d_fake, const TensorT<T>& fake,
                         const TensorT<T>& target,
                         const HybridFocalParams& params = {},
                         double hybrid_weight = 5.0) {
  return add(lsgan_g_adv(d_fake), scale(hybrid_focal(fake, target, params), hybrid_weight));
}

// Soft Dice score of a prediction against a binary target.
template <typename T>
TensorT<T> dsc_soft(const TensorT<T>& p, const TensorT<T>& y, double smooth = 1e-6) {
  return affine(dice_loss(p, y, smooth), -1.0, 1.0);
}

}  // namespace voxpipe::nn
