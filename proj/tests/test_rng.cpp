#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "sociallearn/rng.hpp"
#include "sociallearn/solution.hpp"

using namespace sociallearn;

TEST(Rng, SameKeySameStream) {
  Rng a(derive_seed(7, 1, 2)), b(derive_seed(7, 1, 2));
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
}

TEST(Rng, CountersSeparateStreams) {
  EXPECT_NE(derive_seed(7, 1, 2), derive_seed(7, 2, 1));
  EXPECT_NE(derive_seed(7, 1), derive_seed(8, 1));
  EXPECT_NE(derive_seed(7, Stream::kInit, 0), derive_seed(7, Stream::kAgentStep, 0));
}

TEST(Rng, UniformInUnitInterval) {
  Rng r(1);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.005);
}

// Pearson chi-square against uniform over 7 cells; 99.9% critical value at 6 dof is 22.46.
TEST(Rng, BelowIsUniform) {
  Rng r(99);
  std::vector<int> counts(7, 0);
  const int draws = 70000;
  for (int i = 0; i < draws; ++i) ++counts[r.below(7)];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - draws / 7.0) * (c - draws / 7.0) / (draws / 7.0);
  EXPECT_LT(chi2, 22.46);
}

TEST(Solution, BitsAndStrings) {
  auto s = Solution::from_string("1011");
  EXPECT_EQ(s.size(), 4);
  EXPECT_EQ(s.bits(), 0b1101u);
  EXPECT_EQ(s.to_string(), "1011");
  EXPECT_EQ(s.count_ones(), 3);
  EXPECT_EQ(s.hamming(Solution::from_string("0000")), 3);
  EXPECT_EQ(Solution::from_bits({1, 0, 1, 1}), s);
  EXPECT_THROW(Solution::from_string("10x"), std::invalid_argument);
  EXPECT_THROW(Solution::from_bits({0, 2}), std::invalid_argument);
}

TEST(Solution, ConstructorMasksHighBits) {
  Solution s(3, ~0ULL);
  EXPECT_EQ(s.bits(), 7u);
}
