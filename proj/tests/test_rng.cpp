#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dsbf/numerics/rng.hpp"

using namespace dsbf;

TEST(Rng, Deterministic) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    (void)c;
  }
  EXPECT_NE(Rng(42).next_u64(), Rng(43).next_u64());
}

TEST(Rng, KnownFirstOutputs) {
  // splitmix64 reference values for seed 0
  std::uint64_t s = 0;
  EXPECT_EQ(splitmix64(s), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(splitmix64(s), 0x6E789E6AA1B965F4ULL);
}

TEST(Rng, UniformRangeAndMoments) {
  Rng rng(7);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
    s2 += u * u;
  }
  EXPECT_NEAR(s / n, 0.5, 4 * std::sqrt(1.0 / 12 / n));
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12, 0.002);
}

TEST(Rng, BelowIsInRangeAndCoversAll) {
  Rng rng(8);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(Rng, NormalAndLaplaceHaveUnitVariance) {
  Rng rng(9);
  const int n = 200000;
  for (int kind = 0; kind < 2; ++kind) {
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
      const double x = kind == 0 ? rng.normal() : rng.laplace();
      s += x;
      s2 += x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 4 / std::sqrt(n)) << kind;
    EXPECT_NEAR(s2 / n, 1.0, 0.02) << kind;
  }
}

TEST(Rng, DeriveDependsOnStreamAndState) {
  Rng parent(1);
  const auto a0 = parent.derive(0).next_u64();
  const auto a1 = parent.derive(1).next_u64();
  EXPECT_NE(a0, a1);
  EXPECT_EQ(parent.derive(0).next_u64(), a0);
  parent.next_u64();
  EXPECT_NE(parent.derive(0).next_u64(), a0);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng rng(10);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  rng.shuffle(v);
  std::set<int> s(v.begin(), v.end());
  EXPECT_EQ(s.size(), 10u);
}
