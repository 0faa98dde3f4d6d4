#include "ftsens/firsttime.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ftsens;

namespace {

Dyadic dy(const char* s) { return Dyadic::parse(s); }

HilbertPoint random_point(std::mt19937_64& rng, long long half_width) {
  std::vector<Dyadic> vals;
  for (long long i = -half_width; i <= half_width; ++i) vals.emplace_back(static_cast<long long>(rng() % 257), -8);
  return HilbertPoint(half(), -half_width, vals);
}

// eps / 2^{k+1} <= gamma < eps / 2^k, by scanning k
long k_of(const Dyadic& gamma, const Dyadic& eps) {
  for (long k = 0;; ++k)
    if (ldexp(eps, -(k + 1)) <= gamma && gamma < ldexp(eps, -k)) return k;
}

}  // namespace

TEST(FirstIncrease, AlreadyIncreased) {
  ShiftSystem s;
  EXPECT_EQ(first_increase(s, HilbertPoint{}, s.epsilon, ldexp(s.epsilon, -1), 5).n1, 0);
  TorusLinearSystem cat;
  EXPECT_EQ(first_increase(cat, TorusPoint{0.1, 0.1}, 0.2, 0.1, 5).n1, 0);
}

TEST(FirstIncrease, CenteredShiftValues) {
  ShiftSystem s;
  Dyadic gamma = ldexp(s.epsilon, -2);
  for (long n = 2; n <= 16; ++n) {
    Dyadic r = ldexp(s.epsilon, -n);
    auto rec = first_increase(s, HilbertPoint{}, r, gamma, 100);
    EXPECT_EQ(rec.n1, n - 2);
    EXPECT_EQ(first_increase(s, HilbertPoint{}, r, s.epsilon, 100).n1, n);
    // record invariants
    ASSERT_EQ(rec.trace.size(), static_cast<size_t>(rec.n1 + 1));
    for (long j = 0; j < rec.n1; ++j) EXPECT_LE(rec.trace[static_cast<size_t>(j)].diam.hi, gamma);
    EXPECT_GT(rec.trace.back().diam.lo, gamma);
  }
}

TEST(FirstIncrease, ShiftExactnessRandom) {
  ShiftSystem s;
  std::mt19937_64 rng(11);
  for (int t = 0; t < 10000; ++t) {
    auto x = random_point(rng, static_cast<long long>(rng() % 6));
    long n = 3 + static_cast<long>(rng() % 14);
    Dyadic gamma = ldexp(s.epsilon, -static_cast<long long>(rng() % 4)) - Dyadic(static_cast<long long>(rng() % 4), -12);
    if (!(gamma > Dyadic(0)) || gamma >= s.epsilon) gamma = ldexp(s.epsilon, -1);
    long k = k_of(gamma, s.epsilon);
    if (n - k - 1 < 0) continue;
    long n1 = first_increase(s, x, ldexp(s.epsilon, -n), gamma, 200).n1;
    EXPECT_TRUE(n1 == n - k - 1 || n1 == n - k) << "n=" << n << " k=" << k << " n1=" << n1;
  }
}

TEST(FirstIncrease, Monotonicity) {
  ShiftSystem s;
  std::mt19937_64 rng(12);
  for (int t = 0; t < 200; ++t) {
    auto x = random_point(rng, 3);
    long n = 2 + static_cast<long>(rng() % 10);
    Dyadic r = ldexp(s.epsilon, -n), gamma = ldexp(s.epsilon, -2);
    EXPECT_GE(first_increase(s, x, ldexp(r, -1), gamma, 200).n1, first_increase(s, x, r, gamma, 200).n1);
    EXPECT_LE(first_increase(s, x, r, gamma, 200).n1, first_increase(s, x, r, s.epsilon, 200).n1);
  }
}

TEST(FirstIncrease, ManyThresholdsMatchSingle) {
  ShiftSystem s;
  std::mt19937_64 rng(13);
  std::vector<Dyadic> thr{s.epsilon, ldexp(s.epsilon, -1), ldexp(s.epsilon, -3), dy("3/256")};
  for (int t = 0; t < 100; ++t) {
    auto x = random_point(rng, 4);
    Dyadic r = ldexp(s.epsilon, -static_cast<long long>(4 + rng() % 10));
    auto many = first_increase_many(s, x, r, thr, 100);
    for (size_t i = 0; i < thr.size(); ++i) EXPECT_EQ(many[i], first_increase(s, x, r, thr[i], 100).n1);
  }
}

TEST(FirstIncrease, BudgetExhausted) {
  ShiftSystem s;
  EXPECT_THROW(first_increase(s, HilbertPoint{}, ldexp(s.epsilon, -20), s.epsilon, 5), NotIncreasedWithinBudget);
  EXPECT_THROW(first_increase(s, HilbertPoint{}, s.epsilon, s.epsilon, 0), std::invalid_argument);
}

TEST(ContinuumFirstIncrease, ClosedFormBox) {
  ShiftSystem s;
  for (long k = 0; k <= 12; ++k) {
    auto c = BoxContinuum::unstable_like(HilbertPoint{}, s.epsilon, -k);
    EXPECT_EQ(continuum_first_increase(s, c, s.epsilon, 100).n1, k);
  }
}

TEST(ContinuumFirstIncrease, NeverIncreasing) {
  ShiftSystem s;
  EXPECT_THROW(continuum_first_increase(s, BoxContinuum::singleton(HilbertPoint{}), s.epsilon, 50),
               NotIncreasedWithinBudget);
  // [0, r] at coordinate 0, zeros elsewhere: every iterate has diameter at most r
  Dyadic r = dy("1/16");
  BoxContinuum cr(PointTail{Dyadic(0)});
  cr.set(0, {Dyadic(0), r});
  for (long n = -30; n <= 30; ++n) EXPECT_LE(box_diam(cr.shifted(n)), r);
  EXPECT_THROW(continuum_first_increase(s, cr, dy("1/16"), 200), NotIncreasedWithinBudget);
}

TEST(UniformBound, ShiftAndCat) {
  ShiftSystem s;
  std::mt19937_64 rng(14);
  std::vector<HilbertPoint> sample;
  for (int t = 0; t < 30; ++t) sample.push_back(random_point(rng, 3));
  for (long n = 2; n <= 10; ++n) {
    long N = uniform_bound(s, ldexp(s.epsilon, -n), sample, s.epsilon, 100);
    EXPECT_TRUE(N == n || N == n + 1);
  }
  EXPECT_EQ(uniform_bound(s, ldexp(s.epsilon, -5), {HilbertPoint{}}, s.epsilon, 100), 5);
  EXPECT_THROW(uniform_bound(s, s.epsilon, {}, s.epsilon, 10), std::invalid_argument);

  TorusLinearSystem cat;
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<TorusPoint> pts;
  for (int t = 0; t < 100; ++t) pts.push_back(TorusPoint{u(rng), u(rng)});
  long brute = 0;
  for (const auto& p : pts) {
    long j = 0;
    while (!(cat.measure(cat.ball_image(p, 1e-3, j)).lo > 0.1)) ++j;
    brute = std::max(brute, j);
  }
  EXPECT_EQ(uniform_bound(cat, 1e-3, pts, 0.1, 100), brute);
}

TEST(RefineRadius, ShiftReproducesDyadicSchedule) {
  ShiftSystem s;
  Dyadic r = ldexp(s.epsilon, -1);
  long prev = first_increase(s, HilbertPoint{}, r, s.epsilon, 100).n1;
  for (int k = 2; k <= 10; ++k) {
    r = refine_radius(s, HilbertPoint{}, r, s.epsilon, dy("1/4096"));
    EXPECT_EQ(r, ldexp(s.epsilon, -k));
    long n1 = first_increase(s, HilbertPoint{}, r, s.epsilon, 100).n1;
    EXPECT_EQ(n1, prev + 1);
    prev = n1;
  }
}

TEST(RefineRadius, CatMatchesMatrixNorm) {
  TorusLinearSystem cat;
  double eps = 0.1, tol = 1e-9, r = 1e-2;
  for (int k = 0; k < 4; ++k) {
    long n = first_increase(cat, TorusPoint{0.3, 0.6}, r, eps, 100).n1;
    r = refine_radius(cat, TorusPoint{0.3, 0.6}, r, eps, tol);
    Mat2 P = cat.power(n);
    double rows = 0;
    for (auto& row : P) rows = std::max({rows, std::fabs(double(row[0] + row[1])), std::fabs(double(row[0] - row[1]))});
    double d = 2 * r * rows;
    EXPECT_GE(d, eps - tol);
    EXPECT_LE(d, eps + tol);
    EXPECT_GT(first_increase(cat, TorusPoint{0.3, 0.6}, r, eps, 100).n1, n);
  }
}
