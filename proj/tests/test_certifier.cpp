#include "ftsens/certifier.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <random>

using namespace ftsens;

namespace {

Dyadic dy(const char* s) { return Dyadic::parse(s); }

HilbertPoint random_point(std::mt19937_64& rng, long long half_width) {
  std::vector<Dyadic> vals;
  for (long long i = -half_width; i <= half_width; ++i) vals.emplace_back(static_cast<long long>(rng() % 257), -8);
  return HilbertPoint(half(), -half_width, vals);
}

// Direct evaluation of the recursion on a table.
std::vector<long> recursion(const std::vector<long>& raw) {
  std::vector<long> m{3 * raw[0]};
  for (long v : raw) m.push_back(std::max(3 * v, m.back() + 1));
  return m;
}

}  // namespace

TEST(ShiftConstants, KGamma) {
  Dyadic eps = dy("1/8");
  EXPECT_EQ(shift_k_gamma(eps, eps), -1);
  EXPECT_EQ(shift_k_gamma(ldexp(eps, -1), eps), 0);
  EXPECT_EQ(shift_k_gamma(ldexp(eps, -2), eps), 1);
  EXPECT_EQ(shift_k_gamma(dy("3/64"), eps), 1);
  EXPECT_EQ(shift_k_gamma(ldexp(eps, -3), eps), 2);
  for (long n = 1; n <= 64; ++n) {
    long k = shift_k_grid(n);
    if ((n & (n - 1)) == 0) {
      EXPECT_EQ(k, shift_k_gamma(ldexp(eps, -std::countr_zero(static_cast<unsigned long>(n))), eps));
    }
    EXPECT_TRUE((k == -1 && n == 1) || ((1L << k) < n && n <= (1L << (k + 1))));
  }
  EXPECT_THROW(shift_k_gamma(dy("1/4"), eps), std::invalid_argument);
}

TEST(MonotoneMGamma, ConstantRaw) {
  std::map<long, long> raw{{2, 2}, {3, 2}, {4, 2}, {5, 2}};
  auto s = monotone_mgamma(raw);
  EXPECT_EQ(s.at_index(1), 6);
  EXPECT_EQ(s.at_index(2), 7);
  EXPECT_EQ(s.at_index(3), 8);
  EXPECT_EQ(s.at_index(5), 10);
}

TEST(MonotoneMGamma, SingleGridPoint) {
  auto s = monotone_mgamma({{2, 4}});
  EXPECT_EQ(s.at_index(1), 12);
}

TEST(MonotoneMGamma, RejectsBadGrid) {
  EXPECT_THROW(monotone_mgamma({{3, 1}}), std::invalid_argument);
  EXPECT_THROW(monotone_mgamma({{2, 1}, {4, 1}}), std::invalid_argument);
  EXPECT_TRUE(monotone_mgamma({}).by_index.empty());
}

TEST(MonotoneMGamma, ShiftRawNonIncreasingAndDominating) {
  std::vector<long> raw;
  for (long n = 2; n <= 80; ++n) raw.push_back(shift_raw_m(shift_k_grid(n)));
  auto expect = recursion(raw);
  auto s = shift_schedule(80);
  for (long n = 1; n <= 80; ++n) EXPECT_EQ(s.at_index(n), expect[static_cast<size_t>(n - 1)]);
  // smaller gamma means larger index: values must not decrease with the index
  for (long n = 2; n <= 80; ++n) {
    EXPECT_LE(s.at_index(n - 1), s.at_index(n));
    EXPECT_GE(s.at_index(n), raw[static_cast<size_t>(n - 2)]);
  }
  Dyadic eps = dy("1/8");
  EXPECT_EQ(MonotoneSchedule::index_of(eps, eps), 1);
  EXPECT_EQ(MonotoneSchedule::index_of(ldexp(eps, -1), eps), 2);
  EXPECT_EQ(MonotoneSchedule::index_of(dy("3/64"), eps), 3);
  EXPECT_EQ(MonotoneSchedule::index_of(0.5), 2);
  EXPECT_EQ(MonotoneSchedule::index_of(0.34), 3);
  EXPECT_EQ(s.for_gamma(ldexp(eps, -1), eps), 7);
}

TEST(Certify, ShiftConstantsHold) {
  ShiftSystem sys;
  std::mt19937_64 rng(21);
  std::vector<HilbertPoint> xs;
  for (int t = 0; t < 40; ++t) xs.push_back(random_point(rng, 4));
  auto schedule = geometric_schedule(ldexp(sys.epsilon, -1), 20);
  std::vector<Dyadic> gammas{ldexp(sys.epsilon, -1), ldexp(sys.epsilon, -2), dy("3/128"), ldexp(sys.epsilon, -5)};
  auto rep = certify(sys, xs, schedule, gammas, sys.epsilon, {.budget = 200});
  EXPECT_EQ(rep.verdict, Verdict::CertifiedAtScale);
  for (const auto& g : rep.per_gamma) {
    ASSERT_TRUE(g.k_gamma.has_value());
    for (long v : g.f1) EXPECT_LE(v, 2);
    for (long v : g.f2) EXPECT_LE(v, *g.k_gamma + 2);
    EXPECT_LE(g.observed_m, *g.k_gamma + 2);
    EXPECT_FALSE(g.f1.empty());
  }
  for (const auto& row : rep.rows) {
    EXPECT_GE(row.value, 0);
    EXPECT_LE(schedule[static_cast<size_t>(row.k - 1)], gammas[row.gamma_index]);
  }
}

TEST(Certify, SingleSampleSingleRadius) {
  ShiftSystem sys;
  auto rep = certify(sys, {HilbertPoint{}}, {ldexp(sys.epsilon, -4)}, {ldexp(sys.epsilon, -2)}, sys.epsilon);
  ASSERT_EQ(rep.per_gamma.size(), 1u);
  EXPECT_EQ(rep.per_gamma[0].f2.size(), 1u);
  EXPECT_EQ(rep.per_gamma[0].f2[0], 2);  // n1 at gamma is n-2, at eps is n
  EXPECT_TRUE(rep.per_gamma[0].f1.empty());  // no successor radius
  EXPECT_EQ(rep.rows.size(), 1u);
}

TEST(Certify, InputValidation) {
  ShiftSystem sys;
  auto r = ldexp(sys.epsilon, -4);
  EXPECT_THROW(certify(sys, {}, {r}, {r}, sys.epsilon), std::invalid_argument);
  EXPECT_THROW(certify(sys, {HilbertPoint{}}, {r, r}, {r}, sys.epsilon), std::invalid_argument);
  EXPECT_THROW(certify(sys, {HilbertPoint{}}, {r}, {dy("1/4")}, sys.epsilon), std::invalid_argument);
  try {
    certify(sys, {HilbertPoint{}}, {ldexp(sys.epsilon, -30)}, {ldexp(sys.epsilon, -2)}, sys.epsilon, {.budget = 5});
    FAIL();
  } catch (const NotIncreasedWithinBudget& e) {
    EXPECT_NE(std::string(e.what()).find("schedule index 1"), std::string::npos);
  }
}

TEST(Certify, GrowthHeuristic) {
  EXPECT_TRUE(growing_tail({0, 1, 2, 3, 4, 5}, 5));
  EXPECT_FALSE(growing_tail({0, 1, 2, 2, 4, 5}, 5));
  EXPECT_FALSE(growing_tail({1, 2, 3, 4, 5}, 5));
  EXPECT_DOUBLE_EQ(ls_slope({1, 3, 5, 7}), 2.0);
}

TEST(Certify, ProductWithRotationMatchesBase) {
  ShiftSystem base;
  ProductSystem<ShiftSystem> prod{base, std::sqrt(2.0) - 1};
  std::mt19937_64 rng(22);
  Dyadic gamma = ldexp(base.epsilon, -2);
  for (int t = 0; t < 100; ++t) {
    auto x = random_point(rng, 3);
    double y = static_cast<double>(rng() % 1000) / 1000;
    for (long n = 3; n <= 12; ++n) {
      Dyadic r = ldexp(base.epsilon, -n);  // rotation is an isometry: delta_gamma = gamma / 2 suffices
      if (r + r > gamma) continue;
      EXPECT_EQ(first_increase(prod, {x, y}, r, gamma, 200).n1, first_increase(base, x, r, gamma, 200).n1);
    }
  }
}

TEST(Syndetic, ClosedFormBox) {
  ShiftSystem sys;
  auto c = BoxContinuum::unstable_like(HilbertPoint{}, sys.epsilon, -3);
  auto s = syndetic_gaps(sys, c, sys.epsilon, 200);
  ASSERT_FALSE(s.hits.empty());
  EXPECT_EQ(s.hits.front(), 2);  // diam sigma^2(C) = eps
  EXPECT_EQ(s.hits.size(), 199u);
  EXPECT_EQ(s.max_gap, 2);
}

TEST(Syndetic, Singleton) {
  ShiftSystem sys;
  auto s = syndetic_gaps(sys, BoxContinuum::singleton(HilbertPoint{}), sys.epsilon, 50);
  EXPECT_TRUE(s.hits.empty());
  EXPECT_EQ(s.max_gap, 50);
}

TEST(Syndetic, CatUnstableSegment) {
  TorusLinearSystem cat;
  auto [u, v] = cat.eigenvectors();
  double len = 1e-3, eps = 0.1, lam = cat.expanding_eigenvalue();
  auto seg = Parallelogram::segment({0.2, 0.3}, {0.5 * len * u[0], 0.5 * len * u[1]});
  double sup_u = std::max(std::fabs(u[0]), std::fabs(u[1]));
  long first = static_cast<long>(std::ceil(std::log(eps / (len * sup_u)) / std::log(lam)));
  auto s = syndetic_gaps(cat, seg, eps, 30);
  ASSERT_FALSE(s.hits.empty());
  EXPECT_EQ(s.hits.front(), first);
  EXPECT_EQ(s.hits.size(), static_cast<size_t>(31 - first));
  (void)v;
}
