#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "doctest.h"

#include "core/rng.hpp"

using voxpipe::Rng;

TEST_CASE("same seed reproduces the sequence exactly") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u32() == b.next_u32());
}

TEST_CASE("different seeds diverge") {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 256; ++i) same += a.next_u32() == b.next_u32();
  CHECK(same < 4);
}

TEST_CASE("stream is a pure function of seed and tags") {
  Rng root(7);
  Rng s1 = root.stream(3, 1);
  root.next_u64();  // consuming draws must not affect derived streams
  Rng s2 = root.stream(3, 1);
  for (int i = 0; i < 100; ++i) CHECK(s1.next_u32() == s2.next_u32());
}

TEST_CASE("distinct stream tags give unrelated sequences") {
  Rng root(7);
  Rng a = root.stream(1);
  Rng b = root.stream(2);
  Rng c = root.stream(1, 5);
  int ab = 0, ac = 0;
  for (int i = 0; i < 256; ++i) {
    uint32_t va = a.next_u32(), vb = b.next_u32(), vc = c.next_u32();
    ab += va == vb;
    ac += va == vc;
  }
  CHECK(ab < 4);
  CHECK(ac < 4);
}

TEST_CASE("uniform stays in [0,1) and fills the range") {
  Rng r(11);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 20000; ++i) {
    double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.001);
  CHECK(hi > 0.999);
}

TEST_CASE("uniform(lo,hi) respects its bounds") {
  Rng r(12);
  for (int i = 0; i < 10000; ++i) {
    double u = r.uniform(-3.0, 5.0);
    REQUIRE(u >= -3.0);
    REQUIRE(u < 5.0);
  }
}

TEST_CASE("uniform_int covers [0,n) roughly evenly") {
  Rng r(13);
  const int n = 7;
  std::vector<int> counts(n, 0);
  const int draws = 70000;
  for (int i = 0; i < draws; ++i) {
    auto v = r.uniform_int(n);
    REQUIRE(v >= 0);
    REQUIRE(v < n);
    ++counts[v];
  }
  for (int k = 0; k < n; ++k) {
    CHECK(counts[k] > draws / n - 1000);
    CHECK(counts[k] < draws / n + 1000);
  }
}

TEST_CASE("bernoulli hits its rate") {
  Rng r(14);
  int hits = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) hits += r.bernoulli(0.3);
  double rate = double(hits) / draws;
  CHECK(rate == doctest::Approx(0.3).epsilon(0.05));
}

TEST_CASE("normal has unit moments") {
  Rng r(15);
  const int draws = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    double v = r.normal();
    sum += v;
    sq += v * v;
  }
  double mean = sum / draws;
  double var = sq / draws - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("next_u64 draws two words") {
  Rng a(99), b(99);
  uint64_t v = a.next_u64();
  uint64_t lo = b.next_u32(), hi = b.next_u32();
  CHECK((v == (lo | (hi << 32)) || v == ((lo << 32) | hi)));
}

TEST_CASE("word stream has no short cycle") {
  Rng r(5);
  std::set<uint64_t> seen;
  for (int i = 0; i < 4096; ++i) seen.insert(r.next_u64());
  CHECK(seen.size() == 4096);
}
