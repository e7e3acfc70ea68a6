#include <gtest/gtest.h>

#include <set>

#include "sociallearn/sim_engine.hpp"
#include "sociallearn/topology.hpp"

using namespace sociallearn;

namespace {

struct KeepRule {
  AgentState operator()(const StepContext& ctx, Rng&) const { return ctx.self; }
};

// Records the step at which each distinct landscape is first seen.
struct LandscapeWatcher {
  std::vector<std::pair<int, const NKLandscape*>> seen;
  AgentState operator()(const StepContext& ctx, Rng&) {
    if (seen.empty() || seen.back().second != &ctx.landscape) seen.push_back({ctx.step, &ctx.landscape});
    return ctx.self;
  }
};

EpisodeConfig small_env() {
  EpisodeConfig c;
  c.n_loci = 10;
  c.k = 3;
  c.n_agents = 20;
  c.steps = 40;
  return c;
}

}  // namespace

TEST(SimEngine, NeverAdoptingKeepsMeanConstant) {
  auto cfg = small_env();
  auto land = cfg.make_landscape(1);
  KeepRule rule;
  auto traj = run_episode(cfg, complete_topology(20), land, rule, 3);
  for (double m : traj.mean_payoff) EXPECT_EQ(m, traj.mean_payoff.front());
}

TEST(SimEngine, PayoffsNeverDecreaseForBaselines) {
  auto cfg = small_env();
  cfg.record_agents = true;
  auto topo = complete_topology(20);
  for (const auto& spec : reference_baselines()) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto land = cfg.make_landscape(seed);
      BaselineRule rule{spec};
      auto traj = run_episode(cfg, topo, land, rule, seed);
      for (int a = 0; a < cfg.n_agents; ++a)
        for (int t = 1; t < cfg.steps; ++t) ASSERT_GE(traj.agent_payoff(a, t), traj.agent_payoff(a, t - 1)) << spec.name();
    }
  }
}

TEST(SimEngine, PeriodicResetSwitchesLandscapesOnSchedule) {
  EpisodeConfig cfg = small_env();
  cfg.steps = 200;
  cfg.schedule = PeriodicReset{50, 4};
  std::vector<NKLandscape> lands;
  for (int r = 0; r < 4; ++r) lands.push_back(cfg.make_landscape(100 + static_cast<std::uint64_t>(r)));
  LandscapeWatcher w;
  run_episode(cfg, complete_topology(20), [&](int s) -> const NKLandscape& { return lands[static_cast<std::size_t>(s)]; }, w, 1);
  ASSERT_EQ(w.seen.size(), 4u);
  for (int r = 0; r < 4; ++r) {
    EXPECT_EQ(w.seen[static_cast<std::size_t>(r)].first, 50 * r);
    EXPECT_EQ(w.seen[static_cast<std::size_t>(r)].second, &lands[static_cast<std::size_t>(r)]);
  }
}

TEST(SimEngine, ResetRecomputesStoredPayoffs) {
  EpisodeConfig cfg = small_env();
  cfg.steps = 20;
  cfg.schedule = PeriodicReset{10, 2};
  cfg.record_agents = true;
  std::vector<NKLandscape> lands{cfg.make_landscape(1), cfg.make_landscape(2)};
  KeepRule rule;
  auto traj = run_episode(cfg, complete_topology(20), [&](int s) -> const NKLandscape& { return lands[static_cast<std::size_t>(s)]; }, rule, 4);
  // nobody moves, so the payoff jump at step 10 is exactly the re-evaluation
  Rng init(derive_seed(4, Stream::kInit, 0));
  Solution x0(cfg.n_loci, init());
  EXPECT_EQ(traj.agent_payoff(0, 9), lands[0].payoff(x0));
  EXPECT_EQ(traj.agent_payoff(0, 10), lands[1].payoff(x0));
}

TEST(SimEngine, NeighborSamplesAreDistinctAndUniform) {
  Rng r(1);
  std::vector<int> picks;
  std::vector<int> counts(10, 0);
  for (int i = 0; i < 30000; ++i) {
    detail::sample_distinct(10, 3, r, picks);
    ASSERT_EQ(std::set<int>(picks.begin(), picks.end()).size(), 3u);
    for (int p : picks) ++counts[static_cast<std::size_t>(p)];
  }
  for (int c : counts) EXPECT_NEAR(c / 90000.0, 0.1, 0.006);
}

TEST(SimEngine, EpisodeIsDeterministic) {
  auto cfg = small_env();
  auto land = cfg.make_landscape(5);
  BaselineRule a{StrategySpec::parse("CF-P")}, b{StrategySpec::parse("CF-P")};
  auto t1 = run_episode(cfg, complete_topology(20), land, a, 9);
  auto t2 = run_episode(cfg, complete_topology(20), land, b, 9);
  EXPECT_EQ(t1.mean_payoff, t2.mean_payoff);
}

TEST(SimEngine, BatchIndependentOfWorkerCount) {
  auto cfg = small_env();
  auto topo = complete_topology(20);
  BatchOptions opt;
  opt.n_landscapes = 3;
  opt.reps_per_landscape = 4;
  opt.seed = 12;
  auto make = [] { return BaselineRule{StrategySpec::parse("BI-R")}; };
  auto s1 = run_batch(cfg, topo, make, opt);
  opt.workers = 3;
  auto s3 = run_batch(cfg, topo, make, opt);
  EXPECT_EQ(s1.curve_csv(), s3.curve_csv());
  EXPECT_EQ(s1.episodes, 12);
}

TEST(SimEngine, AggregateStatistics) {
  Trajectory a, b;
  a.mean_payoff = {1, 2, 3};
  b.mean_payoff = {3, 4, 5};
  auto st = aggregate({a, b});
  EXPECT_EQ(st.mean_curve, (std::vector<double>{2, 3, 4}));
  EXPECT_DOUBLE_EQ(st.sem_curve[0], 1.0);  // sd sqrt(2), / sqrt(2)
  EXPECT_DOUBLE_EQ(st.average_mean_payoff, 3.0);
  EXPECT_DOUBLE_EQ(st.final_mean_payoff, 4.0);
  EXPECT_EQ(st.curve_csv().substr(0, 20), "step,mean_payoff,sem");
}

TEST(SimEngine, ConfigValidation) {
  auto cfg = small_env();
  EXPECT_THROW(cfg.validate(complete_topology(10)), std::invalid_argument);
  cfg.n_agents = 3;
  EXPECT_THROW(cfg.validate(complete_topology(3)), std::invalid_argument);  // degree 2 < S
  cfg = small_env();
  cfg.schedule = PeriodicReset{50, 4};
  EXPECT_THROW(cfg.validate(complete_topology(20)), std::invalid_argument);  // 200 != 40
}
