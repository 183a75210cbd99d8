#pragma once

// Slow reference implementations the fast kernels are tested against.
// Everything here is written for clarity, not speed: straight loops,
// no blocking, no early exits beyond bounds checks.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <limits>
#include <vector>

#include "core/conv_kernels.hpp"
#include "core/volume.hpp"

namespace voxpipe::testing {

// Direct seven-loop convolution over ConvDims. Zero padding, fixed
// (ci, kz, ky, kx) accumulation order.
template <typename T>
std::vector<T> naive_conv3d(const std::vector<T>& x, const std::vector<T>& w,
                            const std::vector<T>& b, const nn::ConvDims& cd) {
  std::vector<T> y(static_cast<size_t>(cd.out_numel()), T(0));
  for (int64_t n = 0; n < cd.n; ++n) {
    for (int64_t co = 0; co < cd.co; ++co) {
      for (int64_t zo = 0; zo < cd.od; ++zo) {
        for (int64_t yo = 0; yo < cd.oh; ++yo) {
          for (int64_t xo = 0; xo < cd.ow; ++xo) {
            T sum = b.empty() ? T(0) : b[static_cast<size_t>(co)];
            for (int64_t ci = 0; ci < cd.ci; ++ci) {
              for (int64_t kz = 0; kz < cd.kd; ++kz) {
                int64_t zi = zo * cd.sd + kz - cd.pd0;
                if (zi < 0 || zi >= cd.id) continue;
                for (int64_t ky = 0; ky < cd.kh; ++ky) {
                  int64_t yi = yo * cd.sh + ky - cd.ph0;
                  if (yi < 0 || yi >= cd.ih) continue;
                  for (int64_t kx = 0; kx < cd.kw; ++kx) {
                    int64_t xi = xo * cd.sw + kx - cd.pw0;
                    if (xi < 0 || xi >= cd.iw) continue;
                    T xv = x[static_cast<size_t>(
                        ((n * cd.ci + ci) * cd.id + zi) * cd.ih * cd.iw +
                        yi * cd.iw + xi)];
                    T wv = w[static_cast<size_t>(
                        (((co * cd.ci + ci) * cd.kd + kz) * cd.kh + ky) * cd.kw +
                        kx)];
                    sum += wv * xv;
                  }
                }
              }
            }
            y[static_cast<size_t>(((n * cd.co + co) * cd.od + zo) * cd.oh * cd.ow +
                                  yo * cd.ow + xo)] = sum;
          }
        }
      }
    }
  }
  return y;
}

// Input gradient by scattering each output gradient through the taps
// that produced it.
template <typename T>
std::vector<T> naive_conv3d_bwd_input(const std::vector<T>& dy,
                                      const std::vector<T>& w,
                                      const nn::ConvDims& cd) {
  std::vector<T> dx(static_cast<size_t>(cd.in_numel()), T(0));
  for (int64_t n = 0; n < cd.n; ++n) {
    for (int64_t co = 0; co < cd.co; ++co) {
      for (int64_t zo = 0; zo < cd.od; ++zo) {
        for (int64_t yo = 0; yo < cd.oh; ++yo) {
          for (int64_t xo = 0; xo < cd.ow; ++xo) {
            T g = dy[static_cast<size_t>(
                ((n * cd.co + co) * cd.od + zo) * cd.oh * cd.ow + yo * cd.ow +
                xo)];
            for (int64_t ci = 0; ci < cd.ci; ++ci) {
              for (int64_t kz = 0; kz < cd.kd; ++kz) {
                int64_t zi = zo * cd.sd + kz - cd.pd0;
                if (zi < 0 || zi >= cd.id) continue;
                for (int64_t ky = 0; ky < cd.kh; ++ky) {
                  int64_t yi = yo * cd.sh + ky - cd.ph0;
                  if (yi < 0 || yi >= cd.ih) continue;
                  for (int64_t kx = 0; kx < cd.kw; ++kx) {
                    int64_t xi = xo * cd.sw + kx - cd.pw0;
                    if (xi < 0 || xi >= cd.iw) continue;
                    T wv = w[static_cast<size_t>(
                        (((co * cd.ci + ci) * cd.kd + kz) * cd.kh + ky) * cd.kw +
                        kx)];
                    dx[static_cast<size_t>(
                        ((n * cd.ci + ci) * cd.id + zi) * cd.ih * cd.iw +
                        yi * cd.iw + xi)] += wv * g;
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  return dx;
}

// Weight and bias gradients by the same scatter.
template <typename T>
void naive_conv3d_bwd_weights(const std::vector<T>& x, const std::vector<T>& dy,
                              std::vector<T>& dw, std::vector<T>& db,
                              const nn::ConvDims& cd) {
  dw.assign(static_cast<size_t>(cd.w_numel()), T(0));
  db.assign(static_cast<size_t>(cd.co), T(0));
  for (int64_t n = 0; n < cd.n; ++n) {
    for (int64_t co = 0; co < cd.co; ++co) {
      for (int64_t zo = 0; zo < cd.od; ++zo) {
        for (int64_t yo = 0; yo < cd.oh; ++yo) {
          for (int64_t xo = 0; xo < cd.ow; ++xo) {
            T g = dy[static_cast<size_t>(
                ((n * cd.co + co) * cd.od + zo) * cd.oh * cd.ow + yo * cd.ow +
                xo)];
            db[static_cast<size_t>(co)] += g;
            for (int64_t ci = 0; ci < cd.ci; ++ci) {
              for (int64_t kz = 0; kz < cd.kd; ++kz) {
                int64_t zi = zo * cd.sd + kz - cd.pd0;
                if (zi < 0 || zi >= cd.id) continue;
                for (int64_t ky = 0; ky < cd.kh; ++ky) {
                  int64_t yi = yo * cd.sh + ky - cd.ph0;
                  if (yi < 0 || yi >= cd.ih) continue;
                  for (int64_t kx = 0; kx < cd.kw; ++kx) {
                    int64_t xi = xo * cd.sw + kx - cd.pw0;
                    if (xi < 0 || xi >= cd.iw) continue;
                    dw[static_cast<size_t>(
                        (((co * cd.ci + ci) * cd.kd + kz) * cd.kh + ky) * cd.kw +
                        kx)] +=
                        g * x[static_cast<size_t>(
                                ((n * cd.ci + ci) * cd.id + zi) * cd.ih * cd.iw +
                                yi * cd.iw + xi)];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

// Direct max pooling with -inf padding; first maximum in (dz, dy, dx)
// scan order wins ties, all-padding windows get argmax -1.
template <typename T>
void naive_maxpool3d(const std::vector<T>& x, std::vector<T>& y,
                     std::vector<int64_t>& argmax, const nn::PoolDims& pd) {
  y.assign(static_cast<size_t>(pd.out_numel()), T(0));
  argmax.assign(static_cast<size_t>(pd.out_numel()), -1);
  for (int64_t p = 0; p < pd.n * pd.c; ++p) {
    const T* xc = x.data() + p * pd.id * pd.ih * pd.iw;
    for (int64_t zo = 0; zo < pd.od; ++zo) {
      for (int64_t yo = 0; yo < pd.oh; ++yo) {
        for (int64_t xo = 0; xo < pd.ow; ++xo) {
          T best = -std::numeric_limits<T>::infinity();
          int64_t best_idx = -1;
          for (int64_t dz = 0; dz < pd.kd; ++dz) {
            int64_t zi = zo * pd.sd + dz - pd.pd0;
            if (zi < 0 || zi >= pd.id) continue;
            for (int64_t dy = 0; dy < pd.kh; ++dy) {
              int64_t yi = yo * pd.sh + dy - pd.ph0;
              if (yi < 0 || yi >= pd.ih) continue;
              for (int64_t dx = 0; dx < pd.kw; ++dx) {
                int64_t xi = xo * pd.sw + dx - pd.pw0;
                if (xi < 0 || xi >= pd.iw) continue;
                int64_t idx = (zi * pd.ih + yi) * pd.iw + xi;
                if (xc[idx] > best) {
                  best = xc[idx];
                  best_idx = idx;
                }
              }
            }
          }
          int64_t o = p * pd.od * pd.oh * pd.ow + (zo * pd.oh + yo) * pd.ow + xo;
          y[static_cast<size_t>(o)] = best;
          argmax[static_cast<size_t>(o)] = best_idx;
        }
      }
    }
  }
}

// Breadth-first flood fill, visiting seeds in (z, y, x) scan order so the
// label numbering matches the contract of connected_components.
inline std::vector<int32_t> flood_fill_labels(const MaskVolume& m,
                                              int connectivity) {
  const int64_t nx = m.dims.x, ny = m.dims.y, nz = m.dims.z;
  std::vector<int32_t> labels(m.data.size(), 0);
  std::vector<std::array<int, 3>> offs;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        int manh = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (manh == 0) continue;
        if (connectivity == 6 && manh > 1) continue;
        if (connectivity == 18 && manh > 2) continue;
        offs.push_back({dx, dy, dz});
      }
    }
  }
  int32_t next = 0;
  std::deque<int64_t> queue;
  for (int64_t z = 0; z < nz; ++z) {
    for (int64_t y = 0; y < ny; ++y) {
      for (int64_t x = 0; x < nx; ++x) {
        int64_t at = (z * ny + y) * nx + x;
        if (!m.data[static_cast<size_t>(at)] || labels[static_cast<size_t>(at)])
          continue;
        ++next;
        labels[static_cast<size_t>(at)] = next;
        queue.push_back(at);
        while (!queue.empty()) {
          int64_t cur = queue.front();
          queue.pop_front();
          int64_t cx = cur % nx, cy = (cur / nx) % ny, cz = cur / (nx * ny);
          for (const auto& o : offs) {
            int64_t px = cx + o[0], py = cy + o[1], pz = cz + o[2];
            if (px < 0 || px >= nx || py < 0 || py >= ny || pz < 0 || pz >= nz)
              continue;
            int64_t q = (pz * ny + py) * nx + px;
            if (m.data[static_cast<size_t>(q)] && !labels[static_cast<size_t>(q)]) {
              labels[static_cast<size_t>(q)] = next;
              queue.push_back(q);
            }
          }
        }
      }
    }
  }
  return labels;
}

}  // namespace voxpipe::testing
