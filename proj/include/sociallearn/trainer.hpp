#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sociallearn/adam.hpp"
#include "sociallearn/gae.hpp"
#include "sociallearn/io.hpp"
#include "sociallearn/observation.hpp"
#include "sociallearn/policy.hpp"
#include "sociallearn/sim_engine.hpp"
#include "sociallearn/topology.hpp"

namespace sociallearn {

enum class RewardMode { kPerStepPayoff, kFinalPayoffScaled };
enum class RewardScope { kIndividual, kGroupAveraged };

inline std::string reward_mode_name(RewardMode m) { return m == RewardMode::kPerStepPayoff ? "per_step" : "final_scaled"; }
inline RewardMode parse_reward_mode(const std::string& s) {
  if (s == "per_step") return RewardMode::kPerStepPayoff;
  if (s == "final_scaled") return RewardMode::kFinalPayoffScaled;
  throw std::invalid_argument("reward_mode must be 'per_step' or 'final_scaled', got '" + s + "'");
}
inline std::string reward_scope_name(RewardScope s) { return s == RewardScope::kIndividual ? "individual" : "group"; }
inline RewardScope parse_reward_scope(const std::string& s) {
  if (s == "individual") return RewardScope::kIndividual;
  if (s == "group") return RewardScope::kGroupAveraged;
  throw std::invalid_argument("reward_scope must be 'individual' or 'group', got '" + s + "'");
}

struct CurriculumSwitch {
  int epoch = 0;
  int k = 0;
  friend bool operator==(const CurriculumSwitch&, const CurriculumSwitch&) = default;
};

struct TrainConfig {
  double gamma = 0.98;
  double lambda = 0.95;
  double lr_actor = 1.0e-5;
  double lr_critic = 3.0e-5;
  double entropy_coef = 3e-4;
  int max_epochs = 10000;
  int minibatch_size = 1000;
  int updates_per_epoch = 20;
  int episodes_per_epoch = 1;  // each on its own landscape; their transitions share one buffer
  RewardMode reward_mode = RewardMode::kPerStepPayoff;
  RewardScope reward_scope = RewardScope::kIndividual;
  int fixed_landscapes = 0;  // 0: a fresh landscape every epoch; m > 0: cycle a fixed set of m
  std::vector<CurriculumSwitch> curriculum;
  bool normalize_advantages = true;
  double reward_scale = 0.01;  // applied before advantage estimation only; stored rewards stay raw
  bool early_stopping = true;
  int plateau_window = 200;
  double plateau_min_delta = 0.1;
  int plateau_patience = 500;
  int checkpoint_every = 500;  // 0: final checkpoint only
  PolicyConfig policy;
  EpisodeConfig env;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("train: gamma must be in (0, 1]");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("train: lambda must be in [0, 1]");
    if (!(lr_actor > 0.0) || !(lr_critic > 0.0)) throw std::invalid_argument("train: learning rates must be > 0");
    if (entropy_coef < 0.0) throw std::invalid_argument("train: entropy_coef must be >= 0");
    if (max_epochs < 1 || minibatch_size < 1 || updates_per_epoch < 0 || episodes_per_epoch < 1)
      throw std::invalid_argument("train: epochs, minibatch size and update count must be positive");
    if (fixed_landscapes < 0) throw std::invalid_argument("train: fixed_landscapes must be >= 0");
    if (!(reward_scale > 0.0)) throw std::invalid_argument("train: reward_scale must be > 0");
    if (policy.n_loci != env.n_loci) throw std::invalid_argument("train: policy and environment disagree on N");
    for (std::size_t i = 0; i < curriculum.size(); ++i) {
      if (curriculum[i].k < 0 || curriculum[i].epoch < 0) throw std::invalid_argument("train: bad curriculum entry");
      if (i > 0 && curriculum[i].epoch <= curriculum[i - 1].epoch)
        throw std::invalid_argument("train: curriculum epochs must increase");
    }
  }

  /// K in force at `epoch`.
  int k_at(int epoch) const {
    int k = env.k;
    for (const auto& c : curriculum)
      if (epoch >= c.epoch) k = c.k;
    return k;
  }

  nlohmann::json to_json() const {
    nlohmann::json cur = nlohmann::json::array();
    for (const auto& c : curriculum) cur.push_back({{"epoch", c.epoch}, {"k", c.k}});
    return {{"gamma", gamma},
            {"lambda", lambda},
            {"lr_actor", lr_actor},
            {"lr_critic", lr_critic},
            {"entropy_coef", entropy_coef},
            {"max_epochs", max_epochs},
            {"minibatch_size", minibatch_size},
            {"updates_per_epoch", updates_per_epoch},
            {"episodes_per_epoch", episodes_per_epoch},
            {"reward_mode", reward_mode_name(reward_mode)},
            {"reward_scope", reward_scope_name(reward_scope)},
            {"fixed_landscapes", fixed_landscapes},
            {"curriculum", cur},
            {"normalize_advantages", normalize_advantages},
            {"reward_scale", reward_scale},
            {"early_stopping", early_stopping},
            {"plateau_window", plateau_window},
            {"plateau_min_delta", plateau_min_delta},
            {"plateau_patience", plateau_patience},
            {"checkpoint_every", checkpoint_every},
            {"policy", policy.to_json()},
            {"env", env.to_json()}};
  }
};

struct Transition {
  std::vector<double> observation;  // rows x cols, as built by build_observation
  Solution action;                  // raw sample, before the adopt-if-better check
  double behavior_log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool terminal = false;
  int agent = 0;
  int step = 0;
  double advantage = 0.0;
  double return_target = 0.0;
};

struct EpochBuffer {
  int rows = 0;
  int cols = 0;
  FeatureLayout layout;
  std::vector<Transition> items;  // [agent][step]
};

struct EpochMetrics {
  int epoch = 0;
  int k = 0;
  double avg_mean_payoff = 0.0;
  double entropy = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
};

struct LossReport {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  double mean_ratio = 0.0;
  double max_ratio_deviation = 0.0;  // max |ratio - 1|
};

/// Landscapes handed to training episodes. Fresh mode derives new seeds per
/// epoch; fixed mode cycles a pool of m landscapes (one pool per K).
class TrainingLandscapes {
 public:
  TrainingLandscapes(const TrainConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {}

  /// Landscapes for each reset segment of episode `episode` of `epoch`.
  std::vector<const NKLandscape*> for_epoch(int epoch, int episode = 0) {
    const int k = cfg_.k_at(epoch);
    const int segments = cfg_.env.segments();
    std::vector<const NKLandscape*> out;
    if (cfg_.fixed_landscapes == 0) {
      fresh_.clear();
      EpisodeConfig env = cfg_.env;
      env.k = k;
      for (int r = 0; r < segments; ++r)
        fresh_.push_back(env.make_landscape(episode == 0 ? derive_seed(seed_, Stream::kTraining, 1, epoch, r)
                                                         : derive_seed(seed_, Stream::kTraining, 3, epoch, episode, r)));
      for (const auto& l : fresh_) out.push_back(&l);
      return out;
    }
    auto& pool = pools_[k];
    if (pool.empty()) {
      EpisodeConfig env = cfg_.env;
      env.k = k;
      for (int j = 0; j < cfg_.fixed_landscapes; ++j)
        pool.push_back(env.make_landscape(derive_seed(seed_, Stream::kTraining, 2, k, j)));
    }
    const auto m = static_cast<long>(pool.size());
    const long slot = static_cast<long>(epoch) * cfg_.episodes_per_epoch + episode;
    for (int r = 0; r < segments; ++r)
      out.push_back(&pool[static_cast<std::size_t>((slot * segments + r) % m)]);
    return out;
  }

 private:
  TrainConfig cfg_;
  std::uint64_t seed_;
  std::vector<NKLandscape> fresh_;
  std::map<int, std::vector<NKLandscape>> pools_;
};

namespace detail {

// Rollout rule: acts with the current policy and records every decision.
class CollectRule {
 public:
  CollectRule(const Policy& policy, const TrainConfig& cfg, EpochBuffer& buffer)
      : policy_(policy), cfg_(cfg), buf_(buffer) {}

  AgentState operator()(const StepContext& ctx, Rng& rng) {
    auto obs = build_observation(ctx.self, ctx.sample, cfg_.policy.features);
    const auto view = policy_.actor_forward(obs, ws_);
    const std::vector<double> logits(view.begin(), view.end());
    const auto p1 = bit_probabilities(logits);
    auto [next, sampled] = sample_and_correct(p1, ctx.self, ctx.landscape, rng);
    Transition& tr = slot(ctx.agent, ctx.step);
    tr.behavior_log_prob = log_prob(logits, sampled);
    tr.value = policy_.critic_value(obs, ws_);
    tr.observation = std::move(obs.data);
    tr.action = sampled;
    tr.agent = ctx.agent;
    tr.step = ctx.step;
    tr.terminal = ctx.step == cfg_.env.steps - 1;
    entropy_sum_ += output_entropy(p1);
    return next;
  }

  void on_commit(int step, std::span<const AgentState> states) {
    const int n = static_cast<int>(states.size());
    double mean = 0.0;
    for (const auto& s : states) mean += s.payoff;
    mean /= n;
    const bool final_only = cfg_.reward_mode == RewardMode::kFinalPayoffScaled;
    const bool last = step == cfg_.env.steps - 1;
    for (int i = 0; i < n; ++i) {
      const double payoff = cfg_.reward_scope == RewardScope::kGroupAveraged ? mean : states[static_cast<std::size_t>(i)].payoff;
      double r = payoff;
      if (final_only) r = last ? payoff * cfg_.env.steps : 0.0;
      slot(i, step).reward = r;
    }
  }

  double entropy_sum() const noexcept { return entropy_sum_; }

 private:
  Transition& slot(int agent, int step) {
    return buf_.items[static_cast<std::size_t>(agent) * static_cast<std::size_t>(cfg_.env.steps) + static_cast<std::size_t>(step)];
  }

  const Policy& policy_;
  const TrainConfig& cfg_;
  EpochBuffer& buf_;
  SetNetwork::Workspace ws_;
  double entropy_sum_ = 0.0;
};

}  // namespace detail

/// Runs one on-policy episode with every agent sharing `policy`, fills the
/// buffer ([agent][step]) and attaches GAE advantages and return targets.
inline EpochBuffer collect_epoch(const Policy& policy, const TrainConfig& cfg, const Topology& topology,
                                 std::span<const NKLandscape* const> landscapes, std::uint64_t episode_seed,
                                 EpochMetrics* metrics = nullptr) {
  if (landscapes.size() != static_cast<std::size_t>(cfg.env.segments()))
    throw std::invalid_argument("collect_epoch: need one landscape per reset segment");
  EpochBuffer buf;
  buf.layout = cfg.policy.layout();
  buf.rows = cfg.env.sample_size + 1;
  buf.cols = buf.layout.width;
  buf.items.resize(static_cast<std::size_t>(cfg.env.n_agents) * static_cast<std::size_t>(cfg.env.steps));

  detail::CollectRule rule(policy, cfg, buf);
  auto source = [&](int segment) -> const NKLandscape& { return *landscapes[static_cast<std::size_t>(segment)]; };
  const Trajectory traj = run_episode(cfg.env, topology, source, rule, episode_seed);

  const auto T = static_cast<std::size_t>(cfg.env.steps);
  std::vector<double> r(T), v(T);
  for (int a = 0; a < cfg.env.n_agents; ++a) {
    Transition* tr = buf.items.data() + static_cast<std::size_t>(a) * T;
    for (std::size_t t = 0; t < T; ++t) {
      r[t] = tr[t].reward * cfg.reward_scale;
      v[t] = tr[t].value;
    }
    const auto g = compute_gae(r, v, cfg.gamma, cfg.lambda);
    for (std::size_t t = 0; t < T; ++t) {
      tr[t].advantage = g.advantages[t];
      tr[t].return_target = g.returns[t];
    }
  }

  if (metrics) {
    double sum = 0.0;
    for (double m : traj.mean_payoff) sum += m;
    metrics->avg_mean_payoff = sum / static_cast<double>(T);
    metrics->entropy = rule.entropy_sum() / static_cast<double>(buf.items.size());
  }
  return buf;
}

/// Losses on a minibatch and, optionally, their gradients (accumulated into
/// the given vectors, sized like the actor / critic parameters).
///
///   actor  = -mean(ratio * A_hat) - entropy_coef * mean(entropy)
///   critic = mean((V - target)^2)
inline LossReport minibatch_losses(const Policy& policy, const EpochBuffer& buf, std::span<const std::size_t> batch,
                                   const TrainConfig& cfg, std::vector<double>* actor_grad,
                                   std::vector<double>* critic_grad) {
  const std::size_t B = batch.size();
  if (B == 0) throw std::invalid_argument("minibatch_losses: empty minibatch");
  const int N = policy.n_loci();

  std::vector<double> adv(B);
  for (std::size_t i = 0; i < B; ++i) adv[i] = buf.items[batch[i]].advantage;
  if (cfg.normalize_advantages) {
    double mu = 0.0;
    for (double a : adv) mu += a;
    mu /= static_cast<double>(B);
    double var = 0.0;
    for (double a : adv) var += (a - mu) * (a - mu);
    const double sd = std::sqrt(var / static_cast<double>(B));
    for (double& a : adv) a = (a - mu) / (sd + 1e-8);
  }

  LossReport rep;
  SetNetwork::Workspace ws;
  std::vector<double> dlogits(static_cast<std::size_t>(2 * N));
  const double inv_b = 1.0 / static_cast<double>(B);
  for (std::size_t i = 0; i < B; ++i) {
    const Transition& tr = buf.items[batch[i]];
    const auto logits_view = policy.actor().forward(tr.observation, buf.rows, ws);
    const std::vector<double> logits(logits_view.begin(), logits_view.end());
    const double ratio = std::exp(log_prob(logits, tr.action) - tr.behavior_log_prob);
    const auto p1 = bit_probabilities(logits);
    const double h = output_entropy(p1);
    rep.actor_loss -= inv_b * (ratio * adv[i] + cfg.entropy_coef * h);
    rep.entropy += inv_b * h;
    rep.mean_ratio += inv_b * ratio;
    rep.max_ratio_deviation = std::max(rep.max_ratio_deviation, std::abs(ratio - 1.0));
    if (actor_grad) {
      for (int d = 0; d < N; ++d) {
        const double p = p1[static_cast<std::size_t>(d)];
        const double z = logits[static_cast<std::size_t>(N + d)] - logits[static_cast<std::size_t>(d)];
        const double a = tr.action[d] ? 1.0 : 0.0;
        // d ratio / dz = ratio (a - p);  d H_d / dz = -z p (1 - p)
        const double g = -inv_b * adv[i] * ratio * (a - p) + cfg.entropy_coef * inv_b / N * z * p * (1.0 - p);
        dlogits[static_cast<std::size_t>(N + d)] = g;
        dlogits[static_cast<std::size_t>(d)] = -g;
      }
      policy.actor().backward(ws, dlogits, *actor_grad);
    }

    const double v = policy.critic().forward(tr.observation, buf.rows, ws)[0];
    const double err = v - tr.return_target;
    rep.critic_loss += inv_b * err * err;
    if (critic_grad) {
      const double dv = 2.0 * inv_b * err;
      policy.critic().backward(ws, std::span<const double>(&dv, 1), *critic_grad);
    }
  }
  if (!std::isfinite(rep.actor_loss) || !std::isfinite(rep.critic_loss))
    throw std::runtime_error("training diverged: non-finite loss (actor " + format_double(rep.actor_loss) +
                             ", critic " + format_double(rep.critic_loss) + ")");
  return rep;
}

struct Optimizers {
  Adam actor;
  Adam critic;
  explicit Optimizers(const Policy& p) : actor(p.actor().size()), critic(p.critic().size()) {}
};

/// One Adam step on each network from a minibatch.
inline LossReport update_step(Policy& policy, Optimizers& opt, const EpochBuffer& buf,
                              std::span<const std::size_t> batch, const TrainConfig& cfg) {
  std::vector<double> ga(policy.actor().size(), 0.0);
  std::vector<double> gc(policy.critic().size(), 0.0);
  const LossReport rep = minibatch_losses(policy, buf, batch, cfg, &ga, &gc);
  for (double g : ga)
    if (!std::isfinite(g)) throw std::runtime_error("training diverged: non-finite actor gradient");
  for (double g : gc)
    if (!std::isfinite(g)) throw std::runtime_error("training diverged: non-finite critic gradient");
  opt.actor.step(policy.actor().params(), ga, cfg.lr_actor);
  opt.critic.step(policy.critic().params(), gc, cfg.lr_critic);
  return rep;
}

/// Uniform sample of `m` distinct indices from [0, n) (partial Fisher-Yates).
inline std::vector<std::size_t> sample_minibatch(std::size_t n, std::size_t m, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  m = std::min(m, n);
  for (std::size_t i = 0; i < m; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(m);
  return idx;
}

inline constexpr const char* kMetricsHeader = "epoch,avg_mean_payoff,entropy,actor_loss,critic_loss";

inline std::string metrics_row(const EpochMetrics& m) {
  return std::to_string(m.epoch) + ',' + format_double(m.avg_mean_payoff) + ',' + format_double(m.entropy) + ',' +
         format_double(m.actor_loss) + ',' + format_double(m.critic_loss);
}

/// Stops once the moving average of the epoch payoff has not improved by
/// `min_delta` for `patience` epochs.
class PlateauStopper {
 public:
  PlateauStopper(int window, double min_delta, int patience)
      : window_(window), min_delta_(min_delta), patience_(patience) {}

  bool update(int epoch, double value) {
    history_.push_back(value);
    sum_ += value;
    if (static_cast<int>(history_.size()) > window_) sum_ -= history_[history_.size() - 1 - static_cast<std::size_t>(window_)];
    if (static_cast<int>(history_.size()) < window_) return false;
    const double ma = sum_ / window_;
    if (!have_best_ || ma > best_ + min_delta_) {
      best_ = ma;
      have_best_ = true;
      last_improved_ = epoch;
      return false;
    }
    return epoch - last_improved_ >= patience_;
  }

 private:
  int window_;
  double min_delta_;
  int patience_;
  std::vector<double> history_;
  double sum_ = 0.0;
  double best_ = 0.0;
  bool have_best_ = false;
  int last_improved_ = 0;
};

struct TrainOptions {
  std::string out_dir;  // empty: keep everything in memory
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  Policy policy;
  std::vector<EpochMetrics> metrics;
  bool stopped_early = false;
};

/// Full training loop: collect -> updates_per_epoch minibatch updates ->
/// log, with curriculum switches, periodic checkpoints and plateau stopping.
inline TrainResult train(const TrainConfig& cfg, const Topology& topology, std::uint64_t seed,
                         const TrainOptions& options = {}) {
  cfg.validate();
  cfg.env.validate(topology);
  TrainResult res;
  res.policy = Policy(cfg.policy, derive_seed(seed, Stream::kInitParams));
  Optimizers opt(res.policy);
  TrainingLandscapes lands(cfg, seed);
  PlateauStopper stopper(cfg.plateau_window, cfg.plateau_min_delta, cfg.plateau_patience);

  std::ofstream metrics_out;
  const std::filesystem::path dir = options.out_dir;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(dir / "checkpoints");
    metrics_out.open(dir / "metrics.csv", std::ios::binary);
    if (!metrics_out) throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());
    metrics_out << kMetricsHeader << '\n';
  }
  auto save = [&](int epoch, const std::string& name) {
    if (options.out_dir.empty()) return;
    save_checkpoint((dir / "checkpoints" / name).string(), {res.policy, epoch, cfg.to_json()});
  };

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    EpochMetrics m;
    m.epoch = epoch;
    m.k = cfg.k_at(epoch);
    TrainConfig epoch_cfg = cfg;
    epoch_cfg.env.k = m.k;
    EpochBuffer buf;
    const int E = cfg.episodes_per_epoch;
    for (int e = 0; e < E; ++e) {
      EpochMetrics em;
      const auto epoch_lands = lands.for_epoch(epoch, e);
      const auto episode_seed = e == 0 ? derive_seed(seed, Stream::kTraining, 0, epoch)
                                       : derive_seed(seed, Stream::kTraining, 0, epoch, e);
      EpochBuffer part = collect_epoch(res.policy, epoch_cfg, topology, epoch_lands, episode_seed, &em);
      m.avg_mean_payoff += em.avg_mean_payoff / E;
      m.entropy += em.entropy / E;
      if (e == 0) {
        buf = std::move(part);
      } else {
        buf.items.insert(buf.items.end(), std::make_move_iterator(part.items.begin()),
                         std::make_move_iterator(part.items.end()));
      }
    }

    for (int u = 0; u < cfg.updates_per_epoch; ++u) {
      Rng rng(derive_seed(seed, Stream::kMinibatch, epoch, u));
      const auto batch = sample_minibatch(buf.items.size(), static_cast<std::size_t>(cfg.minibatch_size), rng);
      const LossReport rep = update_step(res.policy, opt, buf, batch, cfg);
      m.actor_loss += rep.actor_loss / cfg.updates_per_epoch;
      m.critic_loss += rep.critic_loss / cfg.updates_per_epoch;
    }

    res.metrics.push_back(m);
    if (metrics_out.is_open()) {
      metrics_out << metrics_row(m) << '\n';
      metrics_out.flush();
    }
    if (options.on_epoch) options.on_epoch(m);
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
      save(epoch + 1, "epoch_" + std::to_string(epoch + 1) + ".json");
    if (cfg.early_stopping && stopper.update(epoch, m.avg_mean_payoff)) {
      res.stopped_early = true;
      break;
    }
  }
  save(static_cast<int>(res.metrics.size()), "final.json");
  return res;
}

}  // namespace sociallearn
