#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace voxpipe {

// Philox4x32-10 counter-based generator. Streams are addressed by a
// 64-bit seed (key) plus three 32-bit stream coordinates; draws advance
// the fourth counter word. Same (seed, stream, draw index) gives the
// same value on every platform and thread count.
class Rng {
 public:
  Rng(uint64_t seed, uint32_t s0 = 0, uint32_t s1 = 0, uint32_t s2 = 0)
      : key0_(static_cast<uint32_t>(seed)),
        key1_(static_cast<uint32_t>(seed >> 32)),
        c0_(s0), c1_(s1), c2_(s2) {}

  Rng stream(uint32_t a, uint32_t b = 0, uint32_t c = 0) const {
    Rng r = *this;
    r.c0_ ^= a * 0x9E3779B9u + 0x7F4A7C15u;
    r.c1_ ^= b * 0xBB67AE85u + 0x94D049BBu;
    r.c2_ ^= c * 0xC2B2AE35u + 0xD6E8FEB8u;
    r.idx_ = 0;
    r.have_ = 0;
    r.spare_valid_ = false;
    return r;
  }

  uint32_t next_u32() {
    if (have_ == 0) {
      philox(idx_++, buf_);
      have_ = 4;
    }
    return buf_[4 - have_--];
  }

  uint64_t next_u64() {
    uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  // Uniform in [0, 1).
  double uniform() { return next_u32() * 0x1p-32; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); n > 0. Multiply-shift map, bias is
  // negligible for the n used here and the map is exact and portable.
  int64_t uniform_int(int64_t n) {
    return static_cast<int64_t>((static_cast<uint64_t>(next_u32()) * static_cast<uint64_t>(n)) >> 32);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; the second value of each pair is
  // cached so draw order stays deterministic.
  double normal() {
    if (spare_valid_) {
      spare_valid_ = false;
      return spare_;
    }
    double u1 = (static_cast<double>(next_u32()) + 1.0) * 0x1p-32;  // (0, 1]
    double u2 = next_u32() * 0x1p-32;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    spare_valid_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  static void mulhilo(uint32_t a, uint32_t b, uint32_t& hi, uint32_t& lo) {
    uint64_t p = static_cast<uint64_t>(a) * b;
    hi = static_cast<uint32_t>(p >> 32);
    lo = static_cast<uint32_t>(p);
  }

  void philox(uint32_t n, uint32_t out[4]) const {
    uint32_t c0 = c0_, c1 = c1_, c2 = c2_, c3 = n;
    uint32_t k0 = key0_, k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      uint32_t hi0, lo0, hi1, lo1;
      mulhilo(0xD2511F53u, c0, hi0, lo0);
      mulhilo(0xCD9E8D57u, c2, hi1, lo1);
      c0 = hi1 ^ c1 ^ k0;
      c1 = lo1;
      c2 = hi0 ^ c3 ^ k1;
      c3 = lo0;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    out[0] = c0;
    out[1] = c1;
    out[2] = c2;
    out[3] = c3;
  }

  uint32_t key0_, key1_;
  uint32_t c0_, c1_, c2_;
  uint32_t idx_ = 0;
  uint32_t buf_[4] = {};
  int have_ = 0;
  double spare_ = 0.0;
  bool spare_valid_ = false;
};

// Stream tags for seed fan-out. Every consumer of randomness derives its
// generator as Rng(seed).stream(tag, ...), so subsystems never share or
// perturb each other's draw sequences.
enum RngTag : uint32_t {
  kRngPhantomCurve = 1,
  kRngPhantomNoise = 2,
  kRngInit = 3,
  kRngShuffle = 4,
  kRngAugment = 5,
  kRngSplit = 6,
  kRngFdCheck = 7,
  kRngNet = 8,
};

}  // namespace voxpipe
