#include "ftsens/continua.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ftsens;

namespace {

Dyadic dy(const char* s) { return Dyadic::parse(s); }
const Dyadic kEps = Dyadic::pow2(-3);

HilbertPoint random_point(std::mt19937_64& rng, long long half_width) {
  std::vector<Dyadic> vals;
  for (long long i = -half_width; i <= half_width; ++i) vals.emplace_back(static_cast<long long>(rng() % 257), -8);
  return HilbertPoint(half(), -half_width, vals);
}

// Coordinatewise scan over a wide window, written from the product formula.
Dyadic scan_closed_diam(const HilbertPoint& x, long k, long W) {
  Dyadic best;
  for (long i = -W; i <= W; ++i) {
    Interval iv = clipped(x.at(i), ldexp(kEps, i - k));
    best = max(best, ldexp(iv.length(), -std::labs(i)));
  }
  return best;
}

std::vector<long> range(long a, long b) {
  std::vector<long> v;
  for (long i = a; i <= b; ++i) v.push_back(i);
  return v;
}

}  // namespace

TEST(ClosedForm, ZerothCoordinate) {
  auto c = shift_fu_closed_form(HilbertPoint{}, 0, kEps);
  EXPECT_EQ(c.at(0), (Interval{dy("3/8"), dy("5/8")}));
  EXPECT_THROW(shift_fu_closed_form(HilbertPoint{}, 0, dy("1/4")), std::invalid_argument);
}

TEST(ClosedForm, DiameterMatchesScan) {
  std::mt19937_64 rng(31);
  for (long k = 0; k <= 10; ++k) {
    EXPECT_EQ(box_diam(shift_fu_closed_form(HilbertPoint{}, k, kEps)), ldexp(kEps, 1 - k));
    auto x = random_point(rng, 4);
    EXPECT_EQ(box_diam(shift_fu_closed_form(x, k, kEps)), scan_closed_diam(x, k, 60));
  }
}

TEST(ClosedForm, ShrinksToSingleton) {
  HilbertPoint x;
  Dyadic prev = Dyadic(1);
  for (long k = 0; k <= 30; ++k) {
    Dyadic d = hausdorff_box(shift_fu_closed_form(x, k, kEps), BoxContinuum::singleton(x));
    EXPECT_EQ(d, ldexp(kEps, -k));
    EXPECT_LT(d, prev);
    prev = d;
  }
}

TEST(FuLimit, ApproximantsConverge) {
  std::mt19937_64 rng(32);
  for (int t = 0; t < 10; ++t) {
    auto x = t == 0 ? HilbertPoint{} : random_point(rng, 3);
    long k = 1 + t % 4;
    Dyadic prev;
    for (long j = 0; j <= 16; ++j) {
      auto chk = verify_fu_limit(x, k, kEps, j);
      EXPECT_TRUE(chk.inner_agree);
      EXPECT_LE(chk.residual, ldexp(Dyadic(1), -j));
      if (j >= 1) {
        EXPECT_GT(chk.residual, Dyadic(0));
        EXPECT_LE(chk.residual, prev);
      }
      prev = chk.residual;
    }
    auto j0 = verify_fu_limit(x, k, kEps, 0);
    EXPECT_EQ(j0.residual,
              hausdorff_box(BoxContinuum::ball_like(x, ldexp(kEps, -k), 0), shift_fu_closed_form(x, k, kEps)));
  }
}

TEST(Build, ShiftCenteredConvergesToClosedForm) {
  ShiftSystem sys;
  Dyadic gamma = ldexp(kEps, -2);
  long kg = shift_k_gamma(gamma, kEps), mg = shift_raw_m(kg);
  auto rec = build_cw_unstable(sys, HilbertPoint{}, gamma, mg, range(0, 14), kEps);
  EXPECT_TRUE(rec.converged);
  EXPECT_LT(rec.hausdorff_residual, 0x1p-20);
  EXPECT_TRUE(rec.anchor_in_every_stage);
  for (const auto& st : rec.stages) {
    EXPECT_GT(st.n1, st.m);
    EXPECT_LE(st.n1, st.m + mg);
    EXPECT_EQ(st.r, ldexp(kEps, -(st.m + kg + 2)));
    EXPECT_LE(rec.delta, box_diam(st.image));
  }
  EXPECT_LT(hausdorff_box(rec.final_image(), shift_fu_closed_form(HilbertPoint{}, kg + 2, kEps)), Dyadic::pow2(-20));
  EXPECT_TRUE(check_backward_stages(sys, rec, kEps));
}

TEST(Build, ShiftRandomAnchorsLandInWindow) {
  ShiftSystem sys;
  std::mt19937_64 rng(33);
  for (Dyadic gamma : {ldexp(kEps, -1), ldexp(kEps, -2), ldexp(kEps, -3)}) {
    long kg = shift_k_gamma(gamma, kEps), mg = shift_raw_m(kg);
    for (int t = 0; t < 5; ++t) {
      auto x = random_point(rng, 3);
      auto rec = build_cw_unstable(sys, x, gamma, mg, range(0, 14), kEps);
      ASSERT_TRUE(rec.converged);
      std::optional<long> k;
      for (long c = kg + 1; c <= kg + mg; ++c)
        if (hausdorff_box(rec.final_image(), shift_fu_closed_form(x, c, kEps)) < Dyadic::pow2(-20)) k = c;
      ASSERT_TRUE(k.has_value());
    }
  }
}

TEST(Build, SingleStage) {
  ShiftSystem sys;
  auto rec = build_cw_unstable(sys, HilbertPoint{}, ldexp(kEps, -2), 3, {5}, kEps);
  EXPECT_EQ(rec.stages.size(), 1u);
  EXPECT_FALSE(rec.converged);
  EXPECT_THROW(build_cw_unstable(sys, HilbertPoint{}, ldexp(kEps, -2), 3, {5, 5}, kEps), std::invalid_argument);
}

TEST(Build, EmptyWindowIsReported) {
  ShiftSystem sys;
  // a radius grid starting far below the window: every grid point has n1 > m + m_gamma
  EXPECT_THROW(build_cw_unstable(sys, HilbertPoint{}, ldexp(kEps, -2), 1, {0}, ldexp(kEps, -40),
                                 BuildOptions{.refine_iters = 0}),
               RadiusWindowEmpty);
}

TEST(Growth, ClosedFormBoxes) {
  ShiftSystem sys;
  auto sched = shift_schedule(64);
  long m_eps = sched.at_index(1);
  for (long k = 1; k <= 6; ++k) {
    Dyadic gamma = ldexp(kEps, -(k - 1));  // k_gamma + 1 = k
    long mg = shift_raw_m(shift_k_gamma(gamma, kEps));
    auto c = shift_fu_closed_form(HilbertPoint{}, k, kEps);
    auto rep = check_growth(sys, c, kEps, mg, m_eps, 200, ldexp(gamma, -mg));
    ASSERT_TRUE(rep.ell.has_value());
    EXPECT_EQ(*rep.ell, k - 1);  // diam sigma^{k-1}(C) = eps
    EXPECT_LE(*rep.ell, 2 * mg);
    EXPECT_TRUE(rep.ok());
  }
  auto big = shift_fu_closed_form(HilbertPoint{}, 0, kEps);
  EXPECT_EQ(*check_growth(sys, big, kEps, 2, 6, 20, kEps).ell, 0);
}

TEST(Growth, FlatControlNeverIncreases) {
  ShiftSystem sys;
  Dyadic r = dy("1/16");
  auto c = shift_flat_control(r);
  for (long n = -50; n <= 50; ++n) EXPECT_LE(box_diam(c.shifted(n)), r);
  auto rep = check_growth(sys, c, kEps, 3, 6, 50, ldexp(kEps, -3));
  EXPECT_FALSE(rep.ell.has_value());
  EXPECT_FALSE(rep.ok());
}

TEST(Shrink, ClosedFormHalves) {
  ShiftSystem sys;
  auto c = shift_fu_closed_form(HilbertPoint{}, 3, kEps);
  for (long n = 0; n <= 20; ++n) EXPECT_EQ(box_diam(c.shifted(-n)), ldexp(kEps, 1 - 3 - n));
  auto sched = shift_schedule(1 << 12);
  std::vector<std::pair<Dyadic, long>> alphas;
  for (long a = 0; a <= 10; ++a) {
    Dyadic alpha = ldexp(kEps, -a);
    alphas.emplace_back(alpha, sched.for_gamma(alpha, kEps));
  }
  for (const auto& row : check_backward_shrink(sys, c, alphas, 60)) EXPECT_TRUE(row.failures.empty());
  auto rows = check_backward_shrink(sys, c, {{ldexp(kEps, 1), 0}}, 5);
  EXPECT_EQ(*rows[0].first_below, 0);
}

TEST(Shrink, UniformControlFails) {
  ShiftSystem sys;
  auto c = shift_uniform_control(HilbertPoint{}, kEps);
  for (long n = 0; n <= 20; ++n) {
    EXPECT_EQ(box_diam(c.shifted(-n)), ldexp(kEps, 1));
    EXPECT_EQ(box_diam(c.shifted(n)), ldexp(kEps, 1));
  }
  auto rows = check_backward_shrink(sys, c, {{ldexp(kEps, -1), 7}}, 40);
  EXPECT_FALSE(rows[0].failures.empty());
}

TEST(Controlled, BallByClosedForm) {
  ShiftSystem sys;
  for (long n = 1; n <= 8; ++n)
    EXPECT_TRUE(controlled_by(sys, HilbertPoint{}, ldexp(kEps, -n), shift_fu_closed_form(HilbertPoint{}, n, kEps), kEps,
                              100));
  EXPECT_FALSE(controlled_by(sys, HilbertPoint{}, ldexp(kEps, -4), shift_fu_closed_form(HilbertPoint{}, 2, kEps), kEps,
                             100));
}

TEST(CatIdentity, SliceOfFixedAnchor) {
  TorusLinearSystem cat;
  ProductSystem<TorusLinearSystem> prod{cat, 0.0};
  ProductSystem<TorusLinearSystem>::point anchor{TorusPoint{0.0, 0.0}, 0.37};
  BuildOptions opt{.conv_tol = 1e-6, .grid_ratio = cat.expanding_eigenvalue()};
  auto rec = build_cw_unstable(prod, anchor, 0.05, 3, range(1, 24), 0.1, opt);
  EXPECT_TRUE(rec.converged);
  EXPECT_TRUE(rec.anchor_in_every_stage);
  EXPECT_LE(rec.stages.back().r, 1e-9);
  auto rep = product_fu_slice_check(prod, rec, 1e-9);
  EXPECT_TRUE(rep.passed) << rep.max_circle_dev << " " << rep.max_line_dev;
  for (const auto& st : rec.stages) EXPECT_GE(prod.measure(st.image).lo, rec.delta);

  auto cloud = slice_cloud(rec.final_image(), 4);
  cloud[3][2] += 1e-2;
  EXPECT_FALSE(product_fu_slice_check(cat, TorusPoint{0.0, 0.0, 0.37}, cloud, 1e-9).passed);
  EXPECT_TRUE(product_fu_slice_check(cat, TorusPoint{0.0, 0.0, 0.37}, {TorusPoint{0.0, 0.0, 0.37}}, 1e-9).passed);
}
