#include <gtest/gtest.h>

#include <cmath>

#include "sociallearn/gae.hpp"
#include "sociallearn/rng.hpp"

using namespace sociallearn;

namespace {

// A_t = sum_k (gamma lambda)^k delta_{t+k}, summed directly.
std::vector<double> double_sum(const std::vector<double>& r, const std::vector<double>& v, double g, double l) {
  const std::size_t T = r.size();
  std::vector<double> a(T, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t k = 0; t + k < T; ++k) {
      const double next = t + k + 1 < T ? v[t + k + 1] : 0.0;
      const double delta = r[t + k] + g * next - v[t + k];
      a[t] += std::pow(g * l, static_cast<double>(k)) * delta;
    }
  return a;
}

}  // namespace

TEST(Gae, MatchesDoubleSum) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> r(10), v(10);
    for (auto& x : r) x = 100 * rng.uniform();
    for (auto& x : v) x = 200 * rng.uniform() - 50;
    const double g = 0.9 + 0.1 * rng.uniform();
    const double l = rng.uniform();
    const auto got = compute_gae(r, v, g, l);
    const auto want = double_sum(r, v, g, l);
    for (std::size_t t = 0; t < 10; ++t) {
      EXPECT_NEAR(got.advantages[t], want[t], 1e-10);
      EXPECT_EQ(got.returns[t], got.advantages[t] + v[t]);
    }
  }
}

TEST(Gae, SingleStep) {
  const auto g = compute_gae(std::vector<double>{3.5}, std::vector<double>{1.25}, 0.98, 0.95);
  EXPECT_EQ(g.advantages[0], 3.5 - 1.25);
}

TEST(Gae, LambdaZeroIsTdError) {
  const std::vector<double> r{1, 2, 3, 4}, v{0.5, 0.25, 2, 1};
  const auto g = compute_gae(r, v, 0.98, 0.0);
  for (std::size_t t = 0; t < 4; ++t) {
    const double next = t + 1 < 4 ? v[t + 1] : 0.0;
    EXPECT_EQ(g.advantages[t], r[t] + 0.98 * next - v[t]);
  }
}

TEST(Gae, LengthMismatchThrows) {
  EXPECT_THROW(compute_gae(std::vector<double>(3), std::vector<double>(2), 0.9, 0.9), std::invalid_argument);
}
