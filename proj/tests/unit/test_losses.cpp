#include <cmath>
#include <vector>

#include "doctest.h"

#include "core/common.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

using namespace voxpipe;
using namespace voxpipe::nn;

namespace {

using Td = TensorT<double>;

Td tensor1(double v) { return Td::from_vector(Shape({1, 1, 1, 1, 1}), {v}); }

Td tensor_of(std::vector<double> v) {
  const int64_t n = static_cast<int64_t>(v.size());
  return Td::from_vector(Shape({1, 1, 1, 1, n}), std::move(v));
}

}  // namespace

// Hand-evaluated single-voxel fixtures. The constants are the defining
// expressions evaluated at full precision, pinned to 1e-6.
TEST_CASE("loss fixtures") {
  const double kTol = 1e-6;

  SUBCASE("focal: y=1, p=0.8, delta=0.6, exponent 2") {
    // 0.6 * (1-0.8)^2 * (-ln 0.8) = 5.355445e-3
    double expect = 0.6 * 0.04 * (-std::log(0.8));
    CHECK(expect == doctest::Approx(5.355e-3).epsilon(1e-3));
    // gamma maps to the exponent as 2*gamma.
    CHECK(std::abs(focal_loss(tensor1(0.8), tensor1(1.0), 0.6, 1.0).item() -
                   expect) < kTol);
  }

  SUBCASE("focal-tversky: y=1, p=0.8, delta=0.6, gamma=0.75") {
    // TI = 0.8/0.92; loss = (1 - TI)^0.75 = 0.2170426
    double expect = std::pow(1.0 - 0.8 / 0.92, 0.75);
    CHECK(expect == doctest::Approx(0.2171).epsilon(5e-4));
    CHECK(std::abs(
              focal_tversky_loss(tensor1(0.8), tensor1(1.0), 0.6, 0.75).item() -
              expect) < kTol);
  }

  SUBCASE("hybrid: even mix of the two single-voxel values") {
    // The two components are pinned at their own fixture gammas (focal
    // exponent 2, tversky 0.75), so the value checks the mix arithmetic.
    double focal = focal_loss(tensor1(0.8), tensor1(1.0), 0.6, 1.0).item();
    double ftl = focal_tversky_loss(tensor1(0.8), tensor1(1.0), 0.6, 0.75).item();
    double expect = 0.5 * (0.6 * 0.04 * (-std::log(0.8))) +
                    0.5 * std::pow(1.0 - 0.8 / 0.92, 0.75);
    CHECK(expect == doctest::Approx(0.11122).epsilon(3e-4));
    CHECK(std::abs(0.5 * focal + 0.5 * ftl - expect) < kTol);
  }

  SUBCASE("hybrid is the lambda mix of its components at shared params") {
    HybridFocalParams hp;
    hp.lambda = 0.3;
    hp.delta = 0.6;
    hp.gamma = 0.75;
    double focal = focal_loss(tensor1(0.8), tensor1(1.0), 0.6, 0.75).item();
    double ftl = focal_tversky_loss(tensor1(0.8), tensor1(1.0), 0.6, 0.75).item();
    CHECK(hybrid_focal(tensor1(0.8), tensor1(1.0), hp).item() ==
          doctest::Approx(0.3 * focal + 0.7 * ftl).epsilon(1e-12));
  }

  SUBCASE("bce: y=1, p=0.5 is ln 2; y=1, p=0.9") {
    CHECK(std::abs(bce(tensor1(0.5), tensor1(1.0)).item() - std::log(2.0)) < kTol);
    CHECK(std::abs(bce(tensor1(0.9), tensor1(1.0)).item() + std::log(0.9)) < kTol);
  }

  SUBCASE("dice: 8 voxels, 4 foreground, p flat 0.5") {
    Td p = Td::from_vector(Shape({1, 1, 2, 2, 2}), std::vector<double>(8, 0.5));
    Td y = Td::from_vector(Shape({1, 1, 2, 2, 2}),
                           {1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0});
    CHECK(std::abs(dice_loss(p, y).item() - 0.5) < kTol);
  }
}

TEST_CASE("loss reductions and identities") {
  Rng rng(0x105535);
  std::vector<double> pv(24), yv(24);
  for (auto& v : pv) v = rng.uniform(0.05, 0.95);
  for (auto& v : yv) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  Shape s({1, 1, 2, 3, 4});
  Td p = Td::from_vector(s, pv);
  Td y = Td::from_vector(s, yv);

  SUBCASE("dice: perfect match ~0, perfect mismatch ~1") {
    CHECK(dice_loss(y, y).item() == doctest::Approx(0.0).epsilon(1e-6));
    std::vector<double> inv(yv.size());
    for (size_t i = 0; i < yv.size(); ++i) inv[i] = 1.0 - yv[i];
    CHECK(dice_loss(Td::from_vector(s, inv), y).item() ==
          doctest::Approx(1.0).epsilon(1e-5));
  }

  SUBCASE("focal with delta=0.5, exponent 0 is half of bce") {
    double half_bce = 0.5 * bce(p, y).item();
    CHECK(focal_loss(p, y, 0.5, 0.0).item() ==
          doctest::Approx(half_bce).epsilon(1e-12));
  }

  SUBCASE("focal-tversky at delta=0.5, gamma=1 matches the dice complement") {
    // Both reduce to 1 - 2*sum(py)/(sum p + sum y) up to the smooth terms.
    CHECK(focal_tversky_loss(p, y, 0.5, 1.0).item() ==
          doctest::Approx(dice_loss(p, y).item()).epsilon(1e-6));
  }

  SUBCASE("focal-tversky vanishes on a perfect prediction") {
    CHECK(focal_tversky_loss(y, y, 0.6, 0.75).item() ==
          doctest::Approx(0.0).epsilon(1e-4));
  }

  SUBCASE("hybrid endpoints select the components") {
    HybridFocalParams hp;
    hp.delta = 0.6;
    hp.gamma = 0.5;
    hp.lambda = 1.0;
    CHECK(hybrid_focal(p, y, hp).item() ==
          doctest::Approx(focal_loss(p, y, 0.6, 0.5).item()).epsilon(1e-12));
    hp.lambda = 0.0;
    CHECK(hybrid_focal(p, y, hp).item() ==
          doctest::Approx(focal_tversky_loss(p, y, 0.6, 0.5).item()).epsilon(1e-12));
  }

  SUBCASE("dsc_soft is one minus dice loss") {
    CHECK(dsc_soft(p, y).item() ==
          doctest::Approx(1.0 - dice_loss(p, y).item()).epsilon(1e-12));
  }

  SUBCASE("lsgan compositions") {
    Td dr = tensor_of({0.9, 1.1, 0.7});
    Td df = tensor_of({0.2, -0.1, 0.4});
    double d_expect = ((0.1 * 0.1 + 0.1 * 0.1 + 0.3 * 0.3) +
                       (0.04 + 0.01 + 0.16)) / 3.0;
    CHECK(lsgan_d_loss(dr, df).item() == doctest::Approx(d_expect).epsilon(1e-12));
    double g_expect = (0.64 + 1.21 + 0.36) / 3.0;
    CHECK(lsgan_g_adv(df).item() == doctest::Approx(g_expect).epsilon(1e-12));
    HybridFocalParams hp;
    CHECK(lsgan_g_total(df, p, y, hp, 5.0).item() ==
          doctest::Approx(g_expect + 5.0 * hybrid_focal(p, y, hp).item())
              .epsilon(1e-10));
  }

  SUBCASE("bce clamps rather than producing infinities") {
    Td p01 = tensor_of({0.0, 1.0});
    Td y01 = tensor_of({1.0, 0.0});
    double v = bce(p01, y01).item();
    CHECK(std::isfinite(v));
    CHECK(v > 20.0);  // -ln(1e-12) averaged
  }

  SUBCASE("hybrid is linear in lambda: three-point collinearity") {
    HybridFocalParams hp;
    auto at = [&](double lam) {
      hp.lambda = lam;
      return hybrid_focal(p, y, hp).item();
    };
    double v0 = at(0.0), vh = at(0.5), v1 = at(1.0);
    CHECK(vh == doctest::Approx(0.5 * (v0 + v1)).epsilon(1e-12));
  }

  SUBCASE("dice is invariant under a joint voxel permutation") {
    Rng prng(77);
    std::vector<double> pp(pv), yy(yv);
    for (size_t i = pp.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(prng.uniform_int(static_cast<int64_t>(i)));
      std::swap(pp[i - 1], pp[j]);
      std::swap(yy[i - 1], yy[j]);
    }
    CHECK(dice_loss(Td::from_vector(s, pp), Td::from_vector(s, yy)).item() ==
          doctest::Approx(dice_loss(p, y).item()).epsilon(1e-12));
  }

  SUBCASE("losses are nonnegative") {
    CHECK(dice_loss(p, y).item() >= 0.0);
    CHECK(focal_loss(p, y, 0.6, 0.5).item() >= 0.0);
    CHECK(focal_tversky_loss(p, y, 0.6, 0.5).item() >= 0.0);
    CHECK(hybrid_focal(p, y).item() >= 0.0);
    CHECK(bce(p, y).item() >= 0.0);
  }

  SUBCASE("shape mismatches throw") {
    Td small = tensor_of({0.5, 0.5});
    CHECK_THROWS_AS(dice_loss(p, small), ShapeError);
    CHECK_THROWS_AS(focal_loss(p, small, 0.6, 0.5), ShapeError);
    CHECK_THROWS_AS(focal_tversky_loss(p, small, 0.6, 0.5), ShapeError);
    CHECK_THROWS_AS(bce(p, small), ShapeError);
  }
}
