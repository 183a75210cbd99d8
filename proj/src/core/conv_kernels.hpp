#pragma once

#include <cstdint>

namespace voxpipe::nn {

// Geometry of one 3-D convolution. Axis order in memory is (d, h, w) =
// (z, y, x); strides and pads are per axis with *_0 the low-side pad.
struct ConvDims {
  int64_t n = 1, ci = 1, co = 1;
  int64_t id = 1, ih = 1, iw = 1;
  int64_t od = 1, oh = 1, ow = 1;
  int64_t kd = 1, kh = 1, kw = 1;
  int64_t sd = 1, sh = 1, sw = 1;
  int64_t pd0 = 0, ph0 = 0, pw0 = 0;

  int64_t in_numel() const { return n * ci * id * ih * iw; }
  int64_t out_numel() const { return n * co * od * oh * ow; }
  int64_t w_numel() const { return co * ci * kd * kh * kw; }
};

// y[n,co,zo,yo,xo] = b[co] + sum over ci,k of
//   x[n,ci, zo*sd+kz-pd0, yo*sh+ky-ph0, xo*sw+kx-pw0] * w[co,ci,kz,ky,kx]
// Out-of-range taps contribute zero. Per output element the reduction
// order is fixed (ci, kz, ky, kx), independent of threading.
template <typename T>
void conv3d_fwd(const T* x, const T* w, const T* b, T* y, const ConvDims& cd);

// dx = adjoint of conv3d_fwd in its input argument.
template <typename T>
void conv3d_bwd_input(const T* dy, const T* w, T* dx, const ConvDims& cd);

// dw, db accumulate nothing on entry (caller zeroes); reduction over
// (n, zo, yo, xo) runs in fixed order per weight element.
template <typename T>
void conv3d_bwd_weights(const T* x, const T* dy, T* dw, T* db, const ConvDims& cd);

struct PoolDims {
  int64_t n = 1, c = 1;
  int64_t id = 1, ih = 1, iw = 1;
  int64_t od = 1, oh = 1, ow = 1;
  int64_t kd = 1, kh = 1, kw = 1;
  int64_t sd = 1, sh = 1, sw = 1;
  int64_t pd0 = 0, ph0 = 0, pw0 = 0;

  int64_t in_numel() const { return n * c * id * ih * iw; }
  int64_t out_numel() const { return n * c * od * oh * ow; }
};

// Max over the window, -inf padding; argmax keeps the first maximum in
// (dz, dy, dx) scan order as a linear index into the input volume.
template <typename T>
void maxpool3d_fwd(const T* x, T* y, int64_t* argmax, const PoolDims& pd);

template <typename T>
void maxpool3d_bwd(const T* dy, const int64_t* argmax, T* dx, const PoolDims& pd);

}  // namespace voxpipe::nn
