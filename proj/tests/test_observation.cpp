#include <gtest/gtest.h>

#include "sociallearn/observation.hpp"

using namespace sociallearn;

namespace {
const Solution A = Solution::from_string("000");
const Solution B = Solution::from_string("110");
const Solution C = Solution::from_string("101");
}  // namespace

TEST(Observation, CompetitionRanking) {
  std::vector<AgentState> nb{{B, 80}, {C, 80}, {A, 10}};
  auto obs = build_observation({A, 50}, nb, FeatureFlags::pirf());
  const int rc = obs.layout.rank;
  EXPECT_DOUBLE_EQ(obs.at(0, rc), 2.0 / 3);
  EXPECT_DOUBLE_EQ(obs.at(1, rc), 0.0);
  EXPECT_DOUBLE_EQ(obs.at(2, rc), 0.0);
  EXPECT_DOUBLE_EQ(obs.at(3, rc), 1.0);
}

TEST(Observation, FrequencyExcludesSelf) {
  const Solution Cself = Solution::from_string("111");
  std::vector<AgentState> nb{{A, 1}, {A, 1}, {B, 2}};
  auto obs = build_observation({Cself, 3}, nb, FeatureFlags::pirf());
  const int fc = obs.layout.frequency;
  EXPECT_DOUBLE_EQ(obs.at(0, fc), 0.0);
  EXPECT_DOUBLE_EQ(obs.at(1, fc), 2.0 / 3);
  EXPECT_DOUBLE_EQ(obs.at(2, fc), 2.0 / 3);
  EXPECT_DOUBLE_EQ(obs.at(3, fc), 1.0 / 3);
}

TEST(Observation, WidthsFollowFlags) {
  std::vector<AgentState> nb{{A, 1}, {B, 2}, {C, 3}};
  EXPECT_EQ(build_observation({A, 0}, nb, FeatureFlags::pirf()).cols, 3 + 1 + 3);
  EXPECT_EQ(build_observation({A, 0}, nb, FeatureFlags::pir()).cols, 3 + 1 + 2);
  EXPECT_EQ(build_observation({A, 0}, nb, FeatureFlags::pi()).cols, 3 + 1 + 1);
  EXPECT_EQ(FeatureFlags::parse("PIR"), FeatureFlags::pir());
  EXPECT_EQ(FeatureFlags::pirf().name(), "PIRF");
  EXPECT_THROW(FeatureFlags::parse("XYZ"), std::invalid_argument);
}

TEST(Observation, RowContents) {
  std::vector<AgentState> nb{{B, 100}, {C, 0}, {A, 37}};
  auto obs = build_observation({A, 50}, nb, FeatureFlags::pirf());
  ASSERT_EQ(obs.rows, 4);
  int self_rows = 0;
  for (int r = 0; r < obs.rows; ++r) {
    self_rows += obs.at(r, obs.layout.indicator) == 1.0;
    for (int c = 0; c < obs.cols; ++c) {
      EXPECT_GE(obs.at(r, c), 0.0);
      EXPECT_LE(obs.at(r, c), 1.0);
    }
  }
  EXPECT_EQ(self_rows, 1);
  EXPECT_DOUBLE_EQ(obs.at(0, obs.layout.payoff), 0.5);
  EXPECT_DOUBLE_EQ(obs.at(1, obs.layout.payoff), 1.0);
  EXPECT_EQ(obs.at(1, 0), 1.0);
  EXPECT_EQ(obs.at(1, 1), 1.0);
  EXPECT_EQ(obs.at(1, 2), 0.0);
}

TEST(Observation, NeedsNeighbors) {
  EXPECT_THROW(build_observation({A, 0}, {}, FeatureFlags::pirf()), std::invalid_argument);
}
