#include "core/conv_kernels.hpp"

#include <algorithm>
#include <limits>
#include <type_traits>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "core/parallel.hpp"

namespace voxpipe::nn {

namespace {

inline int64_t pos_ceil_div(int64_t a, int64_t b) {
  return a > 0 ? (a + b - 1) / b : 0;
}

// Valid output range [lo, hi) so that xo*sw + kx - pw0 stays in [0, iw).
inline void x_range(int64_t kx, int64_t sw, int64_t pw0, int64_t iw, int64_t ow,
                    int64_t& lo, int64_t& hi) {
  lo = pos_ceil_div(pw0 - kx, sw);
  hi = std::min(ow, pos_ceil_div(iw + pw0 - kx, sw));
}

// Interior [lo, hi) where every tap kx in [0, kw) lands inside the row,
// so the inner loops can run unchecked.
inline void x_interior(int64_t kw, int64_t sw, int64_t pw0, int64_t iw,
                       int64_t ow, int64_t& lo, int64_t& hi) {
  lo = std::clamp<int64_t>(pos_ceil_div(pw0, sw), 0, ow);
  hi = iw + pw0 - kw >= 0 ? (iw + pw0 - kw) / sw + 1 : 0;
  hi = std::clamp<int64_t>(hi, lo, ow);
}

// Border columns: every tap is bounds-checked.
template <typename T, int B>
inline void taps_checked(T* const* acc, const T* __restrict src,
                         const T* const* wr, int64_t kw, int64_t sw,
                         int64_t pw0, int64_t iw, int64_t i0, int64_t i1) {
  for (int64_t i = i0; i < i1; ++i) {
    for (int64_t kx = 0; kx < kw; ++kx) {
      int64_t xi = i * sw + kx - pw0;
      if (xi < 0 || xi >= iw) continue;
      const T v = src[xi];
      for (int b = 0; b < B; ++b) acc[b][i] += wr[b][kx] * v;
    }
  }
}

// Interior columns with compile-time kernel width and stride: the kx sum
// collapses into registers and one pass updates B channel rows per source
// load. KW == 0 keeps width and stride dynamic (generic fallback).
template <typename T, int KW, int SW, int B>
inline void taps_interior(T* const* acc, const T* __restrict src,
                          const T* const* wr, int64_t kw, int64_t sw,
                          int64_t pw0, int64_t lo, int64_t hi) {
  const T* s = src - pw0;
  for (int64_t i = lo; i < hi; ++i) {
    const T* sp = s + i * (KW > 0 ? SW : sw);
    for (int b = 0; b < B; ++b) {
      T t = acc[b][i];
      if constexpr (KW > 0) {
        for (int kx = 0; kx < KW; ++kx) t += wr[b][kx] * sp[kx];
      } else {
        for (int64_t kx = 0; kx < kw; ++kx) t += wr[b][kx] * sp[kx];
      }
      acc[b][i] = t;
    }
  }
}

template <typename T, int KW, int SW>
void fwd_impl(const T* x, const T* w, const T* b, T* y, const ConvDims& cd) {
  int64_t ilo, ihi;
  x_interior(cd.kw, cd.sw, cd.pw0, cd.iw, cd.ow, ilo, ihi);

  // One worker owns a full (n, zo, yo) row across all output channels, so
  // every element keeps a fixed accumulation order for any thread count.
  const int64_t rows = cd.n * cd.od * cd.oh;
  parallel_for(rows, [&, ilo, ihi](int64_t r0, int64_t r1) {
    constexpr int kBlock = 4;
    std::vector<T> accbuf(static_cast<size_t>(kBlock * cd.ow));
    T* acc[kBlock];
    const T* wr[kBlock];
    for (int j = 0; j < kBlock; ++j) acc[j] = accbuf.data() + j * cd.ow;

    for (int64_t r = r0; r < r1; ++r) {
      const int64_t yo = r % cd.oh;
      const int64_t t = r / cd.oh;
      const int64_t zo = t % cd.od;
      const int64_t n = t / cd.od;
      const T* xn = x + n * cd.ci * cd.id * cd.ih * cd.iw;

      for (int64_t cb = 0; cb < cd.co; cb += kBlock) {
        const int bs = static_cast<int>(std::min<int64_t>(kBlock, cd.co - cb));
        for (int j = 0; j < bs; ++j) {
          std::fill(acc[j], acc[j] + cd.ow, b ? b[cb + j] : T(0));
        }
        for (int64_t ci = 0; ci < cd.ci; ++ci) {
          const T* xc = xn + ci * cd.id * cd.ih * cd.iw;
          for (int64_t kz = 0; kz < cd.kd; ++kz) {
            const int64_t zi = zo * cd.sd + kz - cd.pd0;
            if (zi < 0 || zi >= cd.id) continue;
            for (int64_t ky = 0; ky < cd.kh; ++ky) {
              const int64_t yi = yo * cd.sh + ky - cd.ph0;
              if (yi < 0 || yi >= cd.ih) continue;
              const T* srow = xc + (zi * cd.ih + yi) * cd.iw;
              for (int j = 0; j < bs; ++j) {
                wr[j] = w + ((((cb + j) * cd.ci + ci) * cd.kd + kz) * cd.kh + ky) * cd.kw;
              }
              switch (bs) {
                case 4:
                  taps_checked<T, 4>(acc, srow, wr, cd.kw, cd.sw, cd.pw0, cd.iw, 0, ilo);
                  taps_interior<T, KW, SW, 4>(acc, srow, wr, cd.kw, cd.sw, cd.pw0, ilo, ihi);
                  taps_checked<T, 4>(acc, srow, wr, cd.kw, cd.sw, cd.pw0, cd.iw, ihi, cd.ow);
                  break;
                case 3:
                  taps_checked<T, 3>(acc, srow, wr, cd.kw, cd.sw, cd.pw0, cd.iw, 0, ilo);
                  taps_interior<T, KW, SW, 3>(acc, srow, wr, cd.kw, cd.sw, cd.pw0, ilo, ihi);
                  taps_checked<T, 3>(acc, srow, wr, cd.kw, cd.sw, cd.pw0, cd.iw, ihi, cd.ow);
                  break;
                case 2:
                  taps_checked<T, 2>(acc, srow, wr, cd.kw, cd.sw, cd.pw0, cd.iw, 0, ilo);
                  taps_interior<T, KW, SW, 2>(acc, srow, wr, cd.kw, cd.sw, cd.pw0, ilo, ihi);
                  taps_checked<T, 2>(acc, srow, wr, cd.kw, cd.sw, cd.pw0, cd.iw, ihi, cd.ow);
                  break;
                default:
                  taps_checked<T, 1>(acc, srow, wr, cd.kw, cd.sw, cd.pw0, cd.iw, 0, ilo);
                  taps_interior<T, KW, SW, 1>(acc, srow, wr, cd.kw, cd.sw, cd.pw0, ilo, ihi);
                  taps_checked<T, 1>(acc, srow, wr, cd.kw, cd.sw, cd.pw0, cd.iw, ihi, cd.ow);
                  break;
              }
            }
          }
        }
        for (int j = 0; j < bs; ++j) {
          T* dst = y + (((n * cd.co + cb + j) * cd.od + zo) * cd.oh + yo) * cd.ow;
          std::copy(acc[j], acc[j] + cd.ow, dst);
        }
      }
    }
  });
}

#if defined(__AVX512F__)

inline __mmask16 mask16(int64_t lanes) {
  return lanes >= 16 ? static_cast<__mmask16>(0xFFFF)
                     : static_cast<__mmask16>((1u << lanes) - 1);
}

// Lanes [lo, hi) of a 16-lane mask.
inline __mmask16 mask16_range(int64_t lo, int64_t hi) {
  lo = std::clamp<int64_t>(lo, 0, 16);
  hi = std::clamp<int64_t>(hi, lo, 16);
  return static_cast<__mmask16>(mask16(hi) & ~mask16(lo));
}

// 16 floats p[0], p[SW], ..., p[15*SW]; only lanes < rem are read, so tail
// tiles never touch memory past the row.
template <int SW>
inline __m512 load16_f32(const float* p, __mmask16 m, int64_t rem) {
  static_assert(SW == 1 || SW == 2);
  if constexpr (SW == 1) {
    (void)rem;
    return _mm512_maskz_loadu_ps(m, p);
  } else {
    (void)m;
    const int64_t need = 2 * rem - 1;
    const __mmask16 mlo = mask16(std::min<int64_t>(need, 16));
    const __mmask16 mhi = mask16(need > 16 ? need - 16 : 0);
    const __m512i even = _mm512_setr_epi32(0, 2, 4, 6, 8, 10, 12, 14, 16, 18,
                                           20, 22, 24, 26, 28, 30);
    const __m512 lo = _mm512_maskz_loadu_ps(mlo, p);
    const __m512 hi = _mm512_maskz_loadu_ps(mhi, p + 16);
    return _mm512_permutex2var_ps(lo, even, hi);
  }
}

// One (n, zo, yo) row for B output channels: the accumulators stay in
// registers across the whole ci*kd*kh reduction and each source load feeds
// B channels. Stride 1 covers the full row, masking each tap by its valid
// lane range so out-of-range taps add exactly the zero padding; stride 2
// covers [ilo, ihi) and leaves the borders to the scalar caller.
template <int KW, int SW, int B>
void fwd_row_tiles_f32(const float* xn, const float* w, const float* bias,
                       float* y, const ConvDims& cd, int64_t n, int64_t zo,
                       int64_t yo, int64_t cb, int64_t ilo, int64_t ihi) {
  const int64_t wstride = cd.ci * cd.kd * cd.kh * cd.kw;
  for (int64_t i0 = ilo; i0 < ihi; i0 += 16) {
    const int64_t rem = std::min<int64_t>(16, ihi - i0);
    const __mmask16 m = mask16(rem);
    __mmask16 mk[KW];
    for (int kx = 0; kx < KW; ++kx) {
      if constexpr (SW == 1) {
        mk[kx] = mask16_range(cd.pw0 - kx - i0,
                              std::min<int64_t>(rem, cd.iw + cd.pw0 - kx - i0));
      } else {
        mk[kx] = m;
      }
    }
    __m512 acc[B];
    for (int j = 0; j < B; ++j) {
      acc[j] = _mm512_set1_ps(bias ? bias[cb + j] : 0.0f);
    }
    for (int64_t ci = 0; ci < cd.ci; ++ci) {
      const float* xc = xn + ci * cd.id * cd.ih * cd.iw;
      for (int64_t kz = 0; kz < cd.kd; ++kz) {
        const int64_t zi = zo * cd.sd + kz - cd.pd0;
        if (zi < 0 || zi >= cd.id) continue;
        for (int64_t ky = 0; ky < cd.kh; ++ky) {
          const int64_t yi = yo * cd.sh + ky - cd.ph0;
          if (yi < 0 || yi >= cd.ih) continue;
          const float* srow =
              xc + (zi * cd.ih + yi) * cd.iw + i0 * SW - cd.pw0;
          __m512 s[KW];
          for (int kx = 0; kx < KW; ++kx) {
            s[kx] = load16_f32<SW>(srow + kx, mk[kx], rem);
          }
          const float* wr =
              w + (((cb * cd.ci + ci) * cd.kd + kz) * cd.kh + ky) * cd.kw;
          for (int j = 0; j < B; ++j, wr += wstride) {
            for (int kx = 0; kx < KW; ++kx) {
              acc[j] = _mm512_fmadd_ps(_mm512_set1_ps(wr[kx]), s[kx], acc[j]);
            }
          }
        }
      }
    }
    for (int j = 0; j < B; ++j) {
      float* dst =
          y + (((n * cd.co + cb + j) * cd.od + zo) * cd.oh + yo) * cd.ow;
      _mm512_mask_storeu_ps(dst + i0, m, acc[j]);
    }
  }
}

// Border column: every tap bounds-checked, one output element.
inline float fwd_col_f32(const float* xn, const float* w, float bias,
                         const ConvDims& cd, int64_t co, int64_t zo,
                         int64_t yo, int64_t i) {
  float sum = bias;
  for (int64_t ci = 0; ci < cd.ci; ++ci) {
    const float* xc = xn + ci * cd.id * cd.ih * cd.iw;
    for (int64_t kz = 0; kz < cd.kd; ++kz) {
      const int64_t zi = zo * cd.sd + kz - cd.pd0;
      if (zi < 0 || zi >= cd.id) continue;
      for (int64_t ky = 0; ky < cd.kh; ++ky) {
        const int64_t yi = yo * cd.sh + ky - cd.ph0;
        if (yi < 0 || yi >= cd.ih) continue;
        const float* srow = xc + (zi * cd.ih + yi) * cd.iw;
        const float* wr =
            w + (((co * cd.ci + ci) * cd.kd + kz) * cd.kh + ky) * cd.kw;
        for (int64_t kx = 0; kx < cd.kw; ++kx) {
          const int64_t xi = i * cd.sw + kx - cd.pw0;
          if (xi < 0 || xi >= cd.iw) continue;
          sum += wr[kx] * srow[xi];
        }
      }
    }
  }
  return sum;
}

template <int KW, int SW>
void fwd_f32_avx512(const float* x, const float* w, const float* b, float* y,
                    const ConvDims& cd) {
  int64_t ilo, ihi;
  if constexpr (SW == 1) {
    // Tap masks absorb the x borders, so tiles span the whole row.
    ilo = 0;
    ihi = cd.ow;
  } else {
    x_interior(cd.kw, cd.sw, cd.pw0, cd.iw, cd.ow, ilo, ihi);
  }

  const int64_t rows = cd.n * cd.od * cd.oh;
  parallel_for(rows, [&, ilo, ihi](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      const int64_t yo = r % cd.oh;
      const int64_t t = r / cd.oh;
      const int64_t zo = t % cd.od;
      const int64_t n = t / cd.od;
      const float* xn = x + n * cd.ci * cd.id * cd.ih * cd.iw;

      for (int64_t cb = 0; cb < cd.co; cb += 8) {
        switch (static_cast<int>(std::min<int64_t>(8, cd.co - cb))) {
          case 8: fwd_row_tiles_f32<KW, SW, 8>(xn, w, b, y, cd, n, zo, yo, cb, ilo, ihi); break;
          case 7: fwd_row_tiles_f32<KW, SW, 7>(xn, w, b, y, cd, n, zo, yo, cb, ilo, ihi); break;
          case 6: fwd_row_tiles_f32<KW, SW, 6>(xn, w, b, y, cd, n, zo, yo, cb, ilo, ihi); break;
          case 5: fwd_row_tiles_f32<KW, SW, 5>(xn, w, b, y, cd, n, zo, yo, cb, ilo, ihi); break;
          case 4: fwd_row_tiles_f32<KW, SW, 4>(xn, w, b, y, cd, n, zo, yo, cb, ilo, ihi); break;
          case 3: fwd_row_tiles_f32<KW, SW, 3>(xn, w, b, y, cd, n, zo, yo, cb, ilo, ihi); break;
          case 2: fwd_row_tiles_f32<KW, SW, 2>(xn, w, b, y, cd, n, zo, yo, cb, ilo, ihi); break;
          default: fwd_row_tiles_f32<KW, SW, 1>(xn, w, b, y, cd, n, zo, yo, cb, ilo, ihi); break;
        }
      }
      if (SW != 1 && (ilo > 0 || ihi < cd.ow)) {
        for (int64_t co = 0; co < cd.co; ++co) {
          float* dst =
              y + (((n * cd.co + co) * cd.od + zo) * cd.oh + yo) * cd.ow;
          const float bias = b ? b[co] : 0.0f;
          for (int64_t i = 0; i < ilo; ++i) {
            dst[i] = fwd_col_f32(xn, w, bias, cd, co, zo, yo, i);
          }
          for (int64_t i = ihi; i < cd.ow; ++i) {
            dst[i] = fwd_col_f32(xn, w, bias, cd, co, zo, yo, i);
          }
        }
      }
    }
  });
}

#endif  // __AVX512F__

}  // namespace

template <typename T>
void conv3d_fwd(const T* x, const T* w, const T* b, T* y, const ConvDims& cd) {
#if defined(__AVX512F__)
  if constexpr (std::is_same_v<T, float>) {
    if (cd.kw == 3 && cd.sw == 1) return fwd_f32_avx512<3, 1>(x, w, b, y, cd);
    if (cd.kw == 3 && cd.sw == 2) return fwd_f32_avx512<3, 2>(x, w, b, y, cd);
    if (cd.kw == 1 && cd.sw == 1) return fwd_f32_avx512<1, 1>(x, w, b, y, cd);
    if (cd.kw == 1 && cd.sw == 2) return fwd_f32_avx512<1, 2>(x, w, b, y, cd);
  }
#endif
  if (cd.kw == 3 && cd.sw == 1) {
    fwd_impl<T, 3, 1>(x, w, b, y, cd);
  } else if (cd.kw == 3 && cd.sw == 2) {
    fwd_impl<T, 3, 2>(x, w, b, y, cd);
  } else if (cd.kw == 1 && cd.sw == 1) {
    fwd_impl<T, 1, 1>(x, w, b, y, cd);
  } else if (cd.kw == 1 && cd.sw == 2) {
    fwd_impl<T, 1, 2>(x, w, b, y, cd);
  } else {
    fwd_impl<T, 0, 1>(x, w, b, y, cd);
  }
}

template <typename T>
void conv3d_bwd_input(const T* dy, const T* w, T* dx, const ConvDims& cd) {
  // Flipped, channel-swapped copy of w: wf[ci,co,kz,ky,kx] = w[co,ci,KZ-1-kz,...].
  std::vector<T> wf(static_cast<size_t>(cd.w_numel()));
  for (int64_t co = 0; co < cd.co; ++co) {
    for (int64_t ci = 0; ci < cd.ci; ++ci) {
      for (int64_t kz = 0; kz < cd.kd; ++kz) {
        for (int64_t ky = 0; ky < cd.kh; ++ky) {
          for (int64_t kx = 0; kx < cd.kw; ++kx) {
            wf[(((ci * cd.co + co) * cd.kd + kz) * cd.kh + ky) * cd.kw + kx] =
                w[(((co * cd.ci + ci) * cd.kd + (cd.kd - 1 - kz)) * cd.kh +
                   (cd.kh - 1 - ky)) * cd.kw + (cd.kw - 1 - kx)];
          }
        }
      }
    }
  }

  // dx = stride-1 conv of the (zero-stuffed) dy with wf and mirrored pads;
  // stuffing turns the strided adjoint into a dense one.
  const T* src = dy;
  int64_t jd = cd.od, jh = cd.oh, jw = cd.ow;
  std::vector<T> stuffed;
  if (cd.sd != 1 || cd.sh != 1 || cd.sw != 1) {
    jd = (cd.od - 1) * cd.sd + 1;
    jh = (cd.oh - 1) * cd.sh + 1;
    jw = (cd.ow - 1) * cd.sw + 1;
    stuffed.assign(static_cast<size_t>(cd.n * cd.co * jd * jh * jw), T(0));
    for (int64_t n = 0; n < cd.n; ++n) {
      for (int64_t c = 0; c < cd.co; ++c) {
        const T* s = dy + (n * cd.co + c) * cd.od * cd.oh * cd.ow;
        T* t = stuffed.data() + (n * cd.co + c) * jd * jh * jw;
        for (int64_t z = 0; z < cd.od; ++z) {
          for (int64_t y = 0; y < cd.oh; ++y) {
            for (int64_t x = 0; x < cd.ow; ++x) {
              t[((z * cd.sd) * jh + y * cd.sh) * jw + x * cd.sw] =
                  s[(z * cd.oh + y) * cd.ow + x];
            }
          }
        }
      }
    }
    src = stuffed.data();
  }

  ConvDims bd;
  bd.n = cd.n;
  bd.ci = cd.co;
  bd.co = cd.ci;
  bd.id = jd; bd.ih = jh; bd.iw = jw;
  bd.od = cd.id; bd.oh = cd.ih; bd.ow = cd.iw;
  bd.kd = cd.kd; bd.kh = cd.kh; bd.kw = cd.kw;
  bd.pd0 = cd.kd - 1 - cd.pd0;
  bd.ph0 = cd.kh - 1 - cd.ph0;
  bd.pw0 = cd.kw - 1 - cd.pw0;
  conv3d_fwd(src, wf.data(), static_cast<const T*>(nullptr), dx, bd);
}

namespace {

// 3x3 weight-gradient unit for one (co, ci, kz): nine dot products share
// each loaded gradient element, with ky rows peeled at the y borders.
template <typename T, int SW>
void bwd_weights_33(const T* x, const T* dy, T* dw, const ConvDims& cd,
                    int64_t co, int64_t ci, int64_t kz, int64_t ilo, int64_t ihi) {
  T a[3][3] = {};
  for (int64_t n = 0; n < cd.n; ++n) {
    const T* xc = x + (n * cd.ci + ci) * cd.id * cd.ih * cd.iw;
    const T* gc = dy + (n * cd.co + co) * cd.od * cd.oh * cd.ow;
    for (int64_t zo = 0; zo < cd.od; ++zo) {
      const int64_t zi = zo * cd.sd + kz - cd.pd0;
      if (zi < 0 || zi >= cd.id) continue;
      const T* xz = xc + zi * cd.ih * cd.iw;
      for (int64_t yo = 0; yo < cd.oh; ++yo) {
        const T* grow = gc + (zo * cd.oh + yo) * cd.ow;
        const int64_t yi0 = yo * cd.sh - cd.ph0;
        if (yi0 >= 0 && yi0 + 2 < cd.ih) {
          const T* r0 = xz + yi0 * cd.iw - cd.pw0;
          const T* r1 = r0 + cd.iw;
          const T* r2 = r1 + cd.iw;
          for (int64_t i = ilo; i < ihi; ++i) {
            const T g = grow[i];
            const int64_t s = i * SW;
            a[0][0] += g * r0[s];
            a[0][1] += g * r0[s + 1];
            a[0][2] += g * r0[s + 2];
            a[1][0] += g * r1[s];
            a[1][1] += g * r1[s + 1];
            a[1][2] += g * r1[s + 2];
            a[2][0] += g * r2[s];
            a[2][1] += g * r2[s + 1];
            a[2][2] += g * r2[s + 2];
          }
          for (int64_t i = 0; i < ilo; ++i) {
            for (int ky = 0; ky < 3; ++ky) {
              for (int64_t kx = 0; kx < 3; ++kx) {
                int64_t xi = i * SW + kx - cd.pw0;
                if (xi < 0 || xi >= cd.iw) continue;
                a[ky][kx] += grow[i] * xz[(yi0 + ky) * cd.iw + xi];
              }
            }
          }
          for (int64_t i = ihi; i < cd.ow; ++i) {
            for (int ky = 0; ky < 3; ++ky) {
              for (int64_t kx = 0; kx < 3; ++kx) {
                int64_t xi = i * SW + kx - cd.pw0;
                if (xi < 0 || xi >= cd.iw) continue;
                a[ky][kx] += grow[i] * xz[(yi0 + ky) * cd.iw + xi];
              }
            }
          }
        } else {
          for (int ky = 0; ky < 3; ++ky) {
            const int64_t yi = yi0 + ky;
            if (yi < 0 || yi >= cd.ih) continue;
            const T* xrow = xz + yi * cd.iw;
            for (int64_t i = 0; i < cd.ow; ++i) {
              for (int64_t kx = 0; kx < 3; ++kx) {
                int64_t xi = i * SW + kx - cd.pw0;
                if (xi < 0 || xi >= cd.iw) continue;
                a[ky][kx] += grow[i] * xrow[xi];
              }
            }
          }
        }
      }
    }
  }
  T* out = dw + ((co * cd.ci + ci) * cd.kd + kz) * cd.kh * cd.kw;
  for (int ky = 0; ky < 3; ++ky) {
    for (int kx = 0; kx < 3; ++kx) out[ky * 3 + kx] += a[ky][kx];
  }
}

#if defined(__AVX512F__)

// Vector form of the 3x3 unit: nine lane-wise accumulators, horizontally
// reduced once at the end. Stride 1 spans full rows with per-tap lane masks
// (x padding falls out of the masking); stride 2 runs the interior and
// leaves the borders to the scalar taps.
template <int SW>
void bwd_w33_f32_avx512(const float* x, const float* dy, float* dw,
                        const ConvDims& cd, int64_t co, int64_t ci, int64_t kz,
                        int64_t ilo, int64_t ihi) {
  if constexpr (SW == 1) {
    ilo = 0;
    ihi = cd.ow;
  }
  __m512 va[3][3];
  for (auto& row : va) {
    for (auto& v : row) v = _mm512_setzero_ps();
  }
  float ab[3][3] = {};
  for (int64_t n = 0; n < cd.n; ++n) {
    const float* xc = x + (n * cd.ci + ci) * cd.id * cd.ih * cd.iw;
    const float* gc = dy + (n * cd.co + co) * cd.od * cd.oh * cd.ow;
    for (int64_t zo = 0; zo < cd.od; ++zo) {
      const int64_t zi = zo * cd.sd + kz - cd.pd0;
      if (zi < 0 || zi >= cd.id) continue;
      const float* xz = xc + zi * cd.ih * cd.iw;
      for (int64_t yo = 0; yo < cd.oh; ++yo) {
        const float* grow = gc + (zo * cd.oh + yo) * cd.ow;
        const int64_t yi0 = yo * cd.sh - cd.ph0;
        if constexpr (SW == 1) {
          for (int64_t i0 = 0; i0 < cd.ow; i0 += 16) {
            const int64_t rem = std::min<int64_t>(16, cd.ow - i0);
            const __m512 g = _mm512_maskz_loadu_ps(mask16(rem), grow + i0);
            __mmask16 mk[3];
            for (int kx = 0; kx < 3; ++kx) {
              mk[kx] =
                  mask16_range(cd.pw0 - kx - i0,
                               std::min<int64_t>(rem, cd.iw + cd.pw0 - kx - i0));
            }
            for (int ky = 0; ky < 3; ++ky) {
              const int64_t yi = yi0 + ky;
              if (yi < 0 || yi >= cd.ih) continue;
              const float* base = xz + yi * cd.iw - cd.pw0 + i0;
              for (int kx = 0; kx < 3; ++kx) {
                va[ky][kx] = _mm512_fmadd_ps(
                    g, _mm512_maskz_loadu_ps(mk[kx], base + kx), va[ky][kx]);
              }
            }
          }
        } else if (yi0 >= 0 && yi0 + 2 < cd.ih) {
          const float* rr[3];
          rr[0] = xz + yi0 * cd.iw - cd.pw0;
          rr[1] = rr[0] + cd.iw;
          rr[2] = rr[1] + cd.iw;
          for (int64_t i0 = ilo; i0 < ihi; i0 += 16) {
            const int64_t rem = std::min<int64_t>(16, ihi - i0);
            const __mmask16 m = mask16(rem);
            const __m512 g = _mm512_maskz_loadu_ps(m, grow + i0);
            for (int ky = 0; ky < 3; ++ky) {
              const float* base = rr[ky] + i0 * SW;
              for (int kx = 0; kx < 3; ++kx) {
                va[ky][kx] = _mm512_fmadd_ps(
                    g, load16_f32<SW>(base + kx, m, rem), va[ky][kx]);
              }
            }
          }
          for (int64_t i = 0; i < ilo; ++i) {
            for (int ky = 0; ky < 3; ++ky) {
              for (int64_t kx = 0; kx < 3; ++kx) {
                int64_t xi = i * SW + kx - cd.pw0;
                if (xi < 0 || xi >= cd.iw) continue;
                ab[ky][kx] += grow[i] * xz[(yi0 + ky) * cd.iw + xi];
              }
            }
          }
          for (int64_t i = ihi; i < cd.ow; ++i) {
            for (int ky = 0; ky < 3; ++ky) {
              for (int64_t kx = 0; kx < 3; ++kx) {
                int64_t xi = i * SW + kx - cd.pw0;
                if (xi < 0 || xi >= cd.iw) continue;
                ab[ky][kx] += grow[i] * xz[(yi0 + ky) * cd.iw + xi];
              }
            }
          }
        } else {
          for (int ky = 0; ky < 3; ++ky) {
            const int64_t yi = yi0 + ky;
            if (yi < 0 || yi >= cd.ih) continue;
            const float* xrow = xz + yi * cd.iw;
            for (int64_t i = 0; i < cd.ow; ++i) {
              for (int64_t kx = 0; kx < 3; ++kx) {
                int64_t xi = i * SW + kx - cd.pw0;
                if (xi < 0 || xi >= cd.iw) continue;
                ab[ky][kx] += grow[i] * xrow[xi];
              }
            }
          }
        }
      }
    }
  }
  float* out = dw + ((co * cd.ci + ci) * cd.kd + kz) * cd.kh * cd.kw;
  for (int ky = 0; ky < 3; ++ky) {
    for (int kx = 0; kx < 3; ++kx) {
      out[ky * 3 + kx] += _mm512_reduce_add_ps(va[ky][kx]) + ab[ky][kx];
    }
  }
}

#endif  // __AVX512F__

template <typename T>
void bwd_weights_generic_unit(const T* x, const T* dy, T* dw, const ConvDims& cd,
                              int64_t co, int64_t ci, int64_t kz, int64_t ky) {
  std::vector<T> dwrow(static_cast<size_t>(cd.kw));
  for (int64_t n = 0; n < cd.n; ++n) {
    const T* xc = x + (n * cd.ci + ci) * cd.id * cd.ih * cd.iw;
    const T* gc = dy + (n * cd.co + co) * cd.od * cd.oh * cd.ow;
    for (int64_t zo = 0; zo < cd.od; ++zo) {
      int64_t zi = zo * cd.sd + kz - cd.pd0;
      if (zi < 0 || zi >= cd.id) continue;
      for (int64_t yo = 0; yo < cd.oh; ++yo) {
        int64_t yi = yo * cd.sh + ky - cd.ph0;
        if (yi < 0 || yi >= cd.ih) continue;
        const T* xrow = xc + (zi * cd.ih + yi) * cd.iw;
        const T* grow = gc + (zo * cd.oh + yo) * cd.ow;
        for (int64_t kx = 0; kx < cd.kw; ++kx) {
          int64_t lo, hi;
          x_range(kx, cd.sw, cd.pw0, cd.iw, cd.ow, lo, hi);
          if (lo >= hi) continue;
          const T* xs = xrow + lo * cd.sw + kx - cd.pw0;
          const T* gs = grow + lo;
          T sum = T(0);
          if (cd.sw == 1) {
            for (int64_t i = 0; i < hi - lo; ++i) sum += gs[i] * xs[i];
          } else {
            for (int64_t i = 0; i < hi - lo; ++i) sum += gs[i] * xs[i * cd.sw];
          }
          dwrow[static_cast<size_t>(kx)] += sum;
        }
      }
    }
  }
  T* out = dw + (((co * cd.ci + ci) * cd.kd + kz) * cd.kh + ky) * cd.kw;
  for (int64_t kx = 0; kx < cd.kw; ++kx) out[kx] += dwrow[static_cast<size_t>(kx)];
}

}  // namespace

template <typename T>
void conv3d_bwd_weights(const T* x, const T* dy, T* dw, T* db, const ConvDims& cd) {
  if (cd.kh == 3 && cd.kw == 3 && (cd.sw == 1 || cd.sw == 2)) {
    int64_t ilo, ihi;
    x_interior(3, cd.sw, cd.pw0, cd.iw, cd.ow, ilo, ihi);
    const int64_t units = cd.co * cd.ci * cd.kd;
    parallel_for(units, [&, ilo, ihi](int64_t u0, int64_t u1) {
      for (int64_t u = u0; u < u1; ++u) {
        int64_t kz = u % cd.kd;
        int64_t t = u / cd.kd;
        int64_t ci = t % cd.ci;
        int64_t co = t / cd.ci;
        bool done = false;
#if defined(__AVX512F__)
        if constexpr (std::is_same_v<T, float>) {
          if (cd.sw == 1) {
            bwd_w33_f32_avx512<1>(x, dy, dw, cd, co, ci, kz, ilo, ihi);
          } else {
            bwd_w33_f32_avx512<2>(x, dy, dw, cd, co, ci, kz, ilo, ihi);
          }
          done = true;
        }
#endif
        if (!done) {
          if (cd.sw == 1) {
            bwd_weights_33<T, 1>(x, dy, dw, cd, co, ci, kz, ilo, ihi);
          } else {
            bwd_weights_33<T, 2>(x, dy, dw, cd, co, ci, kz, ilo, ihi);
          }
        }
      }
    });
  } else {
    const int64_t units = cd.co * cd.ci * cd.kd * cd.kh;
    parallel_for(units, [&](int64_t u0, int64_t u1) {
      for (int64_t u = u0; u < u1; ++u) {
        int64_t ky = u % cd.kh;
        int64_t t = u / cd.kh;
        int64_t kz = t % cd.kd;
        t /= cd.kd;
        int64_t ci = t % cd.ci;
        int64_t co = t / cd.ci;
        bwd_weights_generic_unit(x, dy, dw, cd, co, ci, kz, ky);
      }
    });
  }

  if (db) {
    parallel_for(cd.co, [&](int64_t c0, int64_t c1) {
      for (int64_t co = c0; co < c1; ++co) {
        T sum = T(0);
        for (int64_t n = 0; n < cd.n; ++n) {
          const T* gc = dy + (n * cd.co + co) * cd.od * cd.oh * cd.ow;
          int64_t m = cd.od * cd.oh * cd.ow;
          for (int64_t i = 0; i < m; ++i) sum += gc[i];
        }
        db[co] += sum;
      }
    });
  }
}

template <typename T>
void maxpool3d_fwd(const T* x, T* y, int64_t* argmax, const PoolDims& pd) {
  const int64_t planes = pd.n * pd.c;
  parallel_for(planes, [&](int64_t p0, int64_t p1) {
    for (int64_t p = p0; p < p1; ++p) {
      const T* xc = x + p * pd.id * pd.ih * pd.iw;
      T* yc = y + p * pd.od * pd.oh * pd.ow;
      int64_t* ac = argmax + p * pd.od * pd.oh * pd.ow;
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
                  T v = xc[idx];
                  if (v > best) {  // strict: ties keep the first in scan order
                    best = v;
                    best_idx = idx;
                  }
                }
              }
            }
            int64_t o = (zo * pd.oh + yo) * pd.ow + xo;
            yc[o] = best;
            ac[o] = best_idx;
          }
        }
      }
    }
  });
}

template <typename T>
void maxpool3d_bwd(const T* dy, const int64_t* argmax, T* dx, const PoolDims& pd) {
  // Windows overlap, so scattering stays sequential within a plane.
  const int64_t planes = pd.n * pd.c;
  parallel_for(planes, [&](int64_t p0, int64_t p1) {
    for (int64_t p = p0; p < p1; ++p) {
      const T* gc = dy + p * pd.od * pd.oh * pd.ow;
      const int64_t* ac = argmax + p * pd.od * pd.oh * pd.ow;
      T* dc = dx + p * pd.id * pd.ih * pd.iw;
      int64_t m = pd.od * pd.oh * pd.ow;
      for (int64_t i = 0; i < m; ++i) {
        if (ac[i] >= 0) dc[ac[i]] += gc[i];
      }
    }
  });
}

template void conv3d_fwd<float>(const float*, const float*, const float*, float*, const ConvDims&);
template void conv3d_fwd<double>(const double*, const double*, const double*, double*, const ConvDims&);
template void conv3d_bwd_input<float>(const float*, const float*, float*, const ConvDims&);
template void conv3d_bwd_input<double>(const double*, const double*, double*, const ConvDims&);
template void conv3d_bwd_weights<float>(const float*, const float*, float*, float*, const ConvDims&);
template void conv3d_bwd_weights<double>(const double*, const double*, double*, double*, const ConvDims&);
template void maxpool3d_fwd<float>(const float*, float*, int64_t*, const PoolDims&);
template void maxpool3d_fwd<double>(const double*, double*, int64_t*, const PoolDims&);
template void maxpool3d_bwd<float>(const float*, const int64_t*, float*, const PoolDims&);
template void maxpool3d_bwd<double>(const double*, const int64_t*, double*, const PoolDims&);

}  // namespace voxpipe::nn
