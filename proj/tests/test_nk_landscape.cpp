#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "sociallearn/nk_landscape.hpp"
#include "sociallearn/sim_engine.hpp"

using namespace sociallearn;

namespace {

// Independent evaluation straight from the definition.
double brute_raw(const NKLandscape& l, std::uint64_t bits) {
  double s = 0.0;
  for (int i = 0; i < l.n_loci(); ++i) {
    std::size_t idx = 0;
    for (int dep : l.deps()[static_cast<std::size_t>(i)]) idx = idx * 2 + ((bits >> dep) & 1);
    s += l.tables()[static_cast<std::size_t>(i)][idx];
  }
  return s / l.n_loci();
}

}  // namespace

TEST(NKLandscape, DeterministicInSeed) {
  EXPECT_EQ(NKLandscape::generate(10, 3, 5), NKLandscape::generate(10, 3, 5));
  EXPECT_FALSE(NKLandscape::generate(10, 3, 5) == NKLandscape::generate(10, 3, 6));
}

TEST(NKLandscape, DependencyStructure) {
  auto l = NKLandscape::generate(12, 5, 3);
  for (int i = 0; i < 12; ++i) {
    const auto& d = l.deps()[static_cast<std::size_t>(i)];
    ASSERT_EQ(d.size(), 5u);
    EXPECT_EQ(d[0], i);
    std::vector<int> sorted(d.begin(), d.end());
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
    EXPECT_EQ(l.tables()[static_cast<std::size_t>(i)].size(), 32u);
  }
}

TEST(NKLandscape, ArgmaxScoresExactly100) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto l = NKLandscape::generate(10, 4, seed);
    EXPECT_EQ(l.payoff(l.global_argmax().first), 100.0);
  }
}

// Brute-force search for the optimum and the payoff range, N <= 12.
TEST(NKLandscape, ExhaustiveRangeAndMaximum) {
  for (int n = 1; n <= 12; ++n) {
    for (int k = 1; k <= std::min(n, 4); ++k) {
      auto l = NKLandscape::generate(n, k, 100 + static_cast<std::uint64_t>(n * 10 + k));
      double best = -1.0;
      std::uint64_t arg = 0;
      for (std::uint64_t b = 0; b < (1ULL << n); ++b) {
        const double raw = brute_raw(l, b);
        if (raw > best) best = raw, arg = b;
        const double p = l.payoff(Solution(n, b));
        ASSERT_GE(p, 0.0);
        ASSERT_LE(p, 100.0);
        ASSERT_NEAR(p, 100.0 * std::pow(raw / l.p_max_raw(), 8), 1e-9);
      }
      EXPECT_EQ(l.p_max_raw(), best);
      EXPECT_EQ(l.global_argmax().first.bits(), arg);
    }
  }
}

// Strict monotonicity: ordering by raw payoff and by payoff agree, N <= 12.
TEST(NKLandscape, TransformIsStrictlyMonotone) {
  auto l = NKLandscape::generate(12, 3, 77);
  std::vector<std::pair<double, double>> v;
  for (std::uint64_t b = 0; b < (1ULL << 12); ++b) v.push_back({brute_raw(l, b), l.payoff(Solution(12, b))});
  std::sort(v.begin(), v.end());
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i].first > v[i - 1].first) EXPECT_GT(v[i].second, v[i - 1].second);
    if (v[i].first == v[i - 1].first) EXPECT_EQ(v[i].second, v[i - 1].second);
  }
}

TEST(NKLandscape, CacheMatchesDirectEvaluation) {
  auto l = NKLandscape::generate(15, 8, 9);
  Rng r(3);
  for (int i = 0; i < 1000; ++i) {
    Solution x(15, r());
    EXPECT_EQ(l.payoff(x), l.transform(l.raw_payoff(x)));
  }
}

TEST(NKLandscape, K1IsAdditive) {
  // With one input per table, each locus contributes independently: the
  // optimum takes the better entry at every locus.
  auto l = NKLandscape::generate(8, 1, 4);
  std::uint64_t best = 0;
  for (int i = 0; i < 8; ++i)
    if (l.tables()[static_cast<std::size_t>(i)][1] > l.tables()[static_cast<std::size_t>(i)][0]) best |= 1ULL << i;
  EXPECT_EQ(l.global_argmax().first.bits(), best);
}

TEST(NKLandscape, RejectsBadShapes) {
  EXPECT_THROW(NKLandscape::generate(0, 1, 1), std::invalid_argument);
  EXPECT_THROW(NKLandscape::generate(5, 6, 1), std::invalid_argument);
  EXPECT_THROW(NKLandscape::generate(5, 0, 1), std::invalid_argument);
  EXPECT_THROW(NKLandscape::generate(30, 3, 1), std::invalid_argument);
  auto l = NKLandscape::generate(5, 2, 1);
  EXPECT_THROW(l.payoff(Solution(4)), std::invalid_argument);
}

TEST(NKLandscape, FromPartsValidates) {
  std::vector<std::vector<int>> deps{{0, 1}, {1, 0}};
  std::vector<std::vector<double>> tables{{0.1, 0.2, 0.3, 0.4}, {0.5, 0.6, 0.7, 0.8}};
  auto l = NKLandscape::from_parts(2, 2, deps, tables);
  // x = (1, 1): locus 0 pattern 11 -> 0.4, locus 1 pattern 11 -> 0.8
  EXPECT_DOUBLE_EQ(l.raw_payoff(Solution::from_string("11")), 0.6);
  // x = (1, 0): locus 0 reads (x0, x1) = 10 -> 0.3; locus 1 reads (x1, x0) = 01 -> 0.6
  EXPECT_DOUBLE_EQ(l.raw_payoff(Solution::from_string("10")), 0.45);
  deps[1] = {0, 1};
  EXPECT_THROW(NKLandscape::from_parts(2, 2, deps, tables), std::invalid_argument);
  deps[1] = {1, 0};
  tables[0][0] = 1.5;
  EXPECT_THROW(NKLandscape::from_parts(2, 2, deps, tables), std::invalid_argument);
}

TEST(NKLandscape, JsonRoundTripIsExact) {
  auto l = NKLandscape::generate(11, 4, 21);
  const auto path = std::filesystem::temp_directory_path() / "sl_landscape_rt.json";
  l.save(path.string());
  auto back = NKLandscape::load(path.string());
  EXPECT_EQ(back, l);
  for (std::uint64_t b = 0; b < 64; ++b) EXPECT_EQ(back.payoff(Solution(11, b)), l.payoff(Solution(11, b)));
  std::filesystem::remove(path);
}

TEST(NKLandscape, KConventionMapping) {
  EpisodeConfig cfg;
  cfg.k = 7;
  EXPECT_EQ(cfg.landscape_inputs(), 8);
  cfg.k_convention = KConvention::kTotalInputs;
  EXPECT_EQ(cfg.landscape_inputs(), 7);
  EXPECT_EQ(parse_k_convention("others"), KConvention::kOtherLoci);
  EXPECT_THROW(parse_k_convention("bogus"), std::invalid_argument);
}
