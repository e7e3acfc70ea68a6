#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "sociallearn/trainer.hpp"

using namespace sociallearn;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.env.n_loci = 6;
  c.env.k = 2;
  c.env.n_agents = 8;
  c.env.steps = 10;
  c.policy.n_loci = 6;
  c.policy.hidden = 8;
  c.policy.heads = 2;
  c.minibatch_size = 40;
  c.updates_per_epoch = 2;
  c.max_epochs = 3;
  c.early_stopping = false;
  return c;
}

struct Fixture {
  TrainConfig cfg = tiny_config();
  Topology topo = complete_topology(8);
  NKLandscape land = cfg.env.make_landscape(3);
  Policy policy{cfg.policy, 5};

  EpochBuffer collect(EpochMetrics* m = nullptr) {
    const NKLandscape* l[] = {&land};
    return collect_epoch(policy, cfg, topo, l, 7, m);
  }
};

double loss_of(const Policy& p, const EpochBuffer& b, std::span<const std::size_t> idx, const TrainConfig& c, bool actor) {
  const auto rep = minibatch_losses(p, b, idx, c, nullptr, nullptr);
  return actor ? rep.actor_loss : rep.critic_loss;
}

// Central differences, step 1e-5, relative error with a 1e-6 floor.
double fd_check(Policy& p, const EpochBuffer& b, std::span<const std::size_t> idx, const TrainConfig& c, bool actor) {
  std::vector<double> ga(p.actor().size(), 0.0), gc(p.critic().size(), 0.0);
  minibatch_losses(p, b, idx, c, &ga, &gc);
  auto params = actor ? p.actor().params() : p.critic().params();
  const auto& g = actor ? ga : gc;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + 1e-5;
    const double up = loss_of(p, b, idx, c, actor);
    params[i] = keep - 1e-5;
    const double dn = loss_of(p, b, idx, c, actor);
    params[i] = keep;
    const double fd = (up - dn) / 2e-5;
    worst = std::max(worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-6}));
  }
  return worst;
}

}  // namespace

TEST(Trainer, DefaultBufferSize) {
  TrainConfig cfg;
  Policy p(cfg.policy, 1);
  auto land = cfg.env.make_landscape(1);
  const NKLandscape* l[] = {&land};
  auto buf = collect_epoch(p, cfg, complete_topology(100), l, 2);
  EXPECT_EQ(buf.items.size(), 20000u);
}

TEST(Trainer, BufferLayoutAndRewards) {
  Fixture f;
  EpochMetrics m;
  auto buf = f.collect(&m);
  ASSERT_EQ(buf.items.size(), 80u);
  for (int a = 0; a < 8; ++a) {
    int terminals = 0;
    for (int t = 0; t < 10; ++t) {
      const auto& tr = buf.items[static_cast<std::size_t>(a * 10 + t)];
      EXPECT_EQ(tr.agent, a);
      EXPECT_EQ(tr.step, t);
      EXPECT_GE(tr.reward, 0.0);
      EXPECT_LE(tr.reward, 100.0);
      terminals += tr.terminal;
      if (t > 0) EXPECT_GE(tr.reward, buf.items[static_cast<std::size_t>(a * 10 + t - 1)].reward);
    }
    EXPECT_EQ(terminals, 1);
    const auto& last = buf.items[static_cast<std::size_t>(a * 10 + 9)];
    EXPECT_TRUE(last.terminal);
    EXPECT_NEAR(last.advantage, last.reward * f.cfg.reward_scale - last.value, 1e-12);
  }
  // logged entropy = mean output entropy over the buffer's observations
  double h = 0.0;
  SetNetwork::Workspace ws;
  for (const auto& tr : buf.items) h += output_entropy(bit_probabilities(f.policy.actor().forward(tr.observation, buf.rows, ws)));
  EXPECT_NEAR(m.entropy, h / 80, 1e-12);
}

TEST(Trainer, RewardModes) {
  Fixture f;
  f.cfg.reward_mode = RewardMode::kFinalPayoffScaled;
  auto buf = f.collect();
  for (const auto& tr : buf.items) {
    if (!tr.terminal) EXPECT_EQ(tr.reward, 0.0);
  }
  Fixture g;
  g.cfg.reward_scope = RewardScope::kGroupAveraged;
  auto gb = g.collect();
  for (int t = 0; t < 10; ++t)
    for (int a = 1; a < 8; ++a) EXPECT_EQ(gb.items[static_cast<std::size_t>(a * 10 + t)].reward, gb.items[static_cast<std::size_t>(t)].reward);
  // final-scaled terminal reward = final payoff x L; matches per-step reward at the last step
  Fixture h;
  auto hb = h.collect();
  for (int a = 0; a < 8; ++a)
    EXPECT_DOUBLE_EQ(buf.items[static_cast<std::size_t>(a * 10 + 9)].reward, hb.items[static_cast<std::size_t>(a * 10 + 9)].reward * 10);
}

TEST(Trainer, FirstUpdateRatiosAreOne) {
  Fixture f;
  auto buf = f.collect();
  std::vector<std::size_t> all(buf.items.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto rep = minibatch_losses(f.policy, buf, all, f.cfg, nullptr, nullptr);
  EXPECT_EQ(rep.max_ratio_deviation, 0.0);
  EXPECT_NEAR(rep.mean_ratio, 1.0, 1e-12);  // summation rounding only
}

TEST(Trainer, ZeroAdvantageZeroEntropyMeansNoActorGradient) {
  Fixture f;
  auto buf = f.collect();
  for (auto& tr : buf.items) tr.advantage = 0.0;
  f.cfg.entropy_coef = 0.0;
  f.cfg.normalize_advantages = false;
  std::vector<std::size_t> idx{0, 5, 17, 40};
  std::vector<double> ga(f.policy.actor().size(), 0.0);
  minibatch_losses(f.policy, buf, idx, f.cfg, &ga, nullptr);
  for (double g : ga) EXPECT_EQ(g, 0.0);
}

TEST(Trainer, LossGradientsMatchFiniteDifferences) {
  Fixture f;
  auto buf = f.collect();
  // move the policy off the behavior policy so ratios differ from 1
  Optimizers opt(f.policy);
  std::vector<std::size_t> warm{1, 2, 3, 4, 5, 6};
  f.cfg.lr_actor = 1e-2;
  update_step(f.policy, opt, buf, warm, f.cfg);
  std::vector<std::size_t> idx{11, 52};
  f.cfg.entropy_coef = 0.05;
  EXPECT_LT(fd_check(f.policy, buf, idx, f.cfg, true), 1e-4);
  EXPECT_LT(fd_check(f.policy, buf, idx, f.cfg, false), 1e-4);
  // entropy term alone
  for (auto& tr : buf.items) tr.advantage = 0.0;
  f.cfg.normalize_advantages = false;
  f.cfg.entropy_coef = 1.0;
  EXPECT_LT(fd_check(f.policy, buf, idx, f.cfg, true), 1e-4);
}

TEST(Trainer, LandscapeModes) {
  TrainConfig c = tiny_config();
  c.fixed_landscapes = 1;
  TrainingLandscapes fixed(c, 1);
  const NKLandscape* a = fixed.for_epoch(0)[0];
  EXPECT_EQ(fixed.for_epoch(1)[0], a);
  EXPECT_EQ(fixed.for_epoch(7)[0], a);
  c.fixed_landscapes = 0;
  TrainingLandscapes fresh(c, 1);
  const NKLandscape first = *fresh.for_epoch(0)[0];
  const NKLandscape second = *fresh.for_epoch(1)[0];
  EXPECT_FALSE(first == second);
}

TEST(Trainer, EpisodesWithinAnEpochUseDistinctLandscapes) {
  TrainConfig c = tiny_config();
  c.episodes_per_epoch = 3;
  TrainingLandscapes fresh(c, 4);
  const NKLandscape e0 = *fresh.for_epoch(2, 0)[0];
  const NKLandscape e1 = *fresh.for_epoch(2, 1)[0];
  EXPECT_FALSE(e0 == e1);
  EXPECT_TRUE(e0 == *fresh.for_epoch(2)[0]);
  // fixed pools are cycled episode by episode
  c.fixed_landscapes = 2;
  TrainingLandscapes fixed(c, 4);
  EXPECT_EQ(fixed.for_epoch(0, 0)[0], fixed.for_epoch(0, 2)[0]);
  EXPECT_NE(fixed.for_epoch(0, 0)[0], fixed.for_epoch(0, 1)[0]);
  EXPECT_EQ(fixed.for_epoch(1, 0)[0], fixed.for_epoch(0, 1)[0]);  // slot 3 -> 1
  c.episodes_per_epoch = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Trainer, CurriculumSwitchesK) {
  TrainConfig c = tiny_config();
  c.env.k = 3;
  c.curriculum = {{0, 3}, {1000, 11}};
  EXPECT_EQ(c.k_at(0), 3);
  EXPECT_EQ(c.k_at(999), 3);
  EXPECT_EQ(c.k_at(1000), 11);
  EXPECT_EQ(c.k_at(5000), 11);
  c.env.n_loci = c.policy.n_loci = 15;
  TrainingLandscapes lands(c, 2);
  EXPECT_EQ(lands.for_epoch(999)[0]->k_inputs(), 4);
  EXPECT_EQ(lands.for_epoch(1000)[0]->k_inputs(), 12);
  c.curriculum = {{10, 3}, {5, 4}};
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Trainer, ConfigValidation) {
  TrainConfig c = tiny_config();
  c.gamma = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.lambda = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.lr_actor = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.policy.n_loci = 7;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Trainer, MinibatchSampling) {
  Rng r(1);
  auto idx = sample_minibatch(100, 30, r);
  EXPECT_EQ(idx.size(), 30u);
  std::sort(idx.begin(), idx.end());
  EXPECT_EQ(std::adjacent_find(idx.begin(), idx.end()), idx.end());
  EXPECT_EQ(sample_minibatch(10, 30, r).size(), 10u);
}

TEST(Trainer, PlateauStopper) {
  PlateauStopper s(3, 0.1, 4);
  int stop_at = -1;
  for (int e = 0; e < 50 && stop_at < 0; ++e)
    if (s.update(e, e < 10 ? e : 10.0)) stop_at = e;
  // moving average last improves at epoch 12 (window {10,10,10}); patience 4
  EXPECT_EQ(stop_at, 16);
}

TEST(Trainer, RunsAreReproducible) {
  const auto cfg = tiny_config();
  const auto dir1 = (std::filesystem::temp_directory_path() / "sl_train_a").string();
  const auto dir2 = (std::filesystem::temp_directory_path() / "sl_train_b").string();
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
  auto a = train(cfg, complete_topology(8), 9, {dir1, nullptr});
  auto b = train(cfg, complete_topology(8), 9, {dir2, nullptr});
  EXPECT_TRUE(a.policy == b.policy);
  EXPECT_EQ(read_file(dir1 + "/metrics.csv"), read_file(dir2 + "/metrics.csv"));
  EXPECT_EQ(read_file(dir1 + "/checkpoints/final.json"), read_file(dir2 + "/checkpoints/final.json"));
  const auto csv = read_file(dir1 + "/metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricsHeader);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  auto ck = load_checkpoint(dir1 + "/checkpoints/final.json");
  EXPECT_TRUE(ck.policy == a.policy);
  EXPECT_EQ(ck.epoch, 3);
}
