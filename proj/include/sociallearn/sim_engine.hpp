#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "sociallearn/io.hpp"
#include "sociallearn/nk_landscape.hpp"
#include "sociallearn/rng.hpp"
#include "sociallearn/solution.hpp"
#include "sociallearn/strategies.hpp"
#include "sociallearn/topology.hpp"

namespace sociallearn {

struct StaticSchedule {
  friend bool operator==(const StaticSchedule&, const StaticSchedule&) = default;
};

/// The landscape is redrawn at the start of every period after the first,
/// `count` periods in total.
struct PeriodicReset {
  int period = 50;
  int count = 4;
  friend bool operator==(const PeriodicReset&, const PeriodicReset&) = default;
};

using LandscapeSchedule = std::variant<StaticSchedule, PeriodicReset>;

inline std::string schedule_name(const LandscapeSchedule& s) {
  if (const auto* p = std::get_if<PeriodicReset>(&s))
    return "periodic:" + std::to_string(p->period) + "x" + std::to_string(p->count);
  return "static";
}

/// How an environment's ruggedness K maps to landscape table inputs.
/// kOtherLoci: each locus depends on K other loci (K+1 inputs), the
/// convention under which the published baseline results reproduce.
/// kTotalInputs: K inputs including the locus itself.
enum class KConvention { kOtherLoci, kTotalInputs };

inline std::string k_convention_name(KConvention c) { return c == KConvention::kOtherLoci ? "others" : "total"; }

inline KConvention parse_k_convention(const std::string& s) {
  if (s == "others") return KConvention::kOtherLoci;
  if (s == "total") return KConvention::kTotalInputs;
  throw std::invalid_argument("k_convention must be 'others' or 'total', got '" + s + "'");
}

struct EpisodeConfig {
  int n_loci = 15;
  int k = 7;
  KConvention k_convention = KConvention::kOtherLoci;
  int n_agents = 100;
  int sample_size = 3;
  int steps = 200;
  LandscapeSchedule schedule = StaticSchedule{};
  bool record_agents = false;

  int landscape_inputs() const { return k_convention == KConvention::kOtherLoci ? k + 1 : k; }

  NKLandscape make_landscape(std::uint64_t seed) const {
    return NKLandscape::generate(n_loci, landscape_inputs(), seed);
  }

  int segments() const {
    const auto* p = std::get_if<PeriodicReset>(&schedule);
    return p ? p->count : 1;
  }

  int segment_length() const {
    const auto* p = std::get_if<PeriodicReset>(&schedule);
    return p ? p->period : steps;
  }

  void validate(const Topology& topology) const {
    if (steps < 1) throw std::invalid_argument("episode: steps must be >= 1");
    if (sample_size < 1) throw std::invalid_argument("episode: sample size must be >= 1");
    if (n_agents != topology.size()) throw std::invalid_argument("episode: n_agents does not match the topology");
    if (topology.min_degree() < sample_size)
      throw std::invalid_argument("episode: a node has fewer neighbors than the sample size");
    if (const auto* p = std::get_if<PeriodicReset>(&schedule)) {
      if (p->period < 1 || p->count < 1 || p->period * p->count != steps)
        throw std::invalid_argument("episode: reset period * count must equal steps");
    }
  }

  nlohmann::json to_json() const {
    return {{"n_loci", n_loci},
            {"k", k},
            {"k_convention", k_convention_name(k_convention)},
            {"n_agents", n_agents},
            {"sample_size", sample_size},
            {"steps", steps},
            {"schedule", schedule_name(schedule)}};
  }
};

/// What a rule sees when updating one agent. `sample` holds the S neighbor
/// states from the time-t snapshot.
struct StepContext {
  int agent;
  int step;
  const AgentState& self;
  std::span<const AgentState> sample;
  const NKLandscape& landscape;
};

/// A per-agent update rule. Rules may also provide
/// `on_commit(int step, std::span<const AgentState> states)`, called after
/// all agents' new states for `step` are committed.
template <typename R>
concept StepRule = requires(R& rule, const StepContext& ctx, Rng& rng) {
  { rule(ctx, rng) } -> std::convertible_to<AgentState>;
};

/// Adapter that runs a reference heuristic.
struct BaselineRule {
  StrategySpec spec;
  AgentState operator()(const StepContext& ctx, Rng& rng) const {
    return strategy_step(spec, ctx.self, ctx.sample, ctx.landscape, rng);
  }
};

struct Trajectory {
  int n_agents = 0;
  std::vector<double> mean_payoff;  // population mean after each step
  std::vector<double> per_agent;    // optional, row-major [agent][step]

  double agent_payoff(int agent, int step) const {
    return per_agent[static_cast<std::size_t>(agent) * mean_payoff.size() + static_cast<std::size_t>(step)];
  }
};

namespace detail {

// Floyd's algorithm: S distinct positions from [0, degree) with S draws.
inline void sample_distinct(int degree, int count, Rng& rng, std::vector<int>& out) {
  out.clear();
  for (int j = degree - count; j < degree; ++j) {
    const int t = static_cast<int>(rng.below(static_cast<std::uint64_t>(j) + 1));
    bool taken = false;
    for (int v : out) taken |= (v == t);
    out.push_back(taken ? j : t);
  }
}

}  // namespace detail

/// One episode: agents start from iid uniform solutions and update
/// synchronously for cfg.steps steps. Every step each agent observes S
/// distinct neighbors drawn uniformly from its adjacency; all new states
/// commit together. `landscapes(segment)` supplies the landscape for each
/// reset segment; at a reset every stored payoff is re-evaluated.
///
/// Random streams are keyed by (seed, agent, step), so the result does not
/// depend on evaluation order.
template <typename LandscapeSource, StepRule Rule>
  requires std::invocable<LandscapeSource&, int>
Trajectory run_episode(const EpisodeConfig& cfg, const Topology& topology, LandscapeSource&& landscapes, Rule& rule,
                       std::uint64_t seed) {
  cfg.validate(topology);
  const int n = cfg.n_agents;
  const int s = cfg.sample_size;
  const NKLandscape* land = &landscapes(0);
  if (land->n_loci() != cfg.n_loci) throw std::invalid_argument("episode: landscape N does not match the config");

  std::vector<AgentState> states(static_cast<std::size_t>(n));
  std::vector<AgentState> next(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, Stream::kInit, i));
    Solution x(cfg.n_loci, rng());
    states[static_cast<std::size_t>(i)] = {x, land->payoff(x)};
  }

  Trajectory traj;
  traj.n_agents = n;
  traj.mean_payoff.resize(static_cast<std::size_t>(cfg.steps));
  if (cfg.record_agents) traj.per_agent.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(cfg.steps));

  const int period = cfg.segment_length();
  std::vector<int> picks;
  std::vector<AgentState> sample(static_cast<std::size_t>(s));
  for (int t = 0; t < cfg.steps; ++t) {
    if (t > 0 && t % period == 0) {
      land = &landscapes(t / period);
      if (land->n_loci() != cfg.n_loci) throw std::invalid_argument("episode: landscape N does not match the config");
      for (auto& st : states) st.payoff = land->payoff(st.solution);
    }
    for (int i = 0; i < n; ++i) {
      Rng rng(derive_seed(seed, Stream::kAgentStep, i, t));
      const auto& nbrs = topology.neighbors(i);
      detail::sample_distinct(static_cast<int>(nbrs.size()), s, rng, picks);
      for (int k = 0; k < s; ++k)
        sample[static_cast<std::size_t>(k)] = states[static_cast<std::size_t>(nbrs[static_cast<std::size_t>(picks[static_cast<std::size_t>(k)])])];
      const StepContext ctx{i, t, states[static_cast<std::size_t>(i)], sample, *land};
      next[static_cast<std::size_t>(i)] = rule(ctx, rng);
    }
    states.swap(next);

    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double p = states[static_cast<std::size_t>(i)].payoff;
      sum += p;
      if (cfg.record_agents) traj.per_agent[static_cast<std::size_t>(i) * static_cast<std::size_t>(cfg.steps) + static_cast<std::size_t>(t)] = p;
    }
    traj.mean_payoff[static_cast<std::size_t>(t)] = sum / n;
    if constexpr (requires { rule.on_commit(t, std::span<const AgentState>(states)); })
      rule.on_commit(t, std::span<const AgentState>(states));
  }
  return traj;
}

/// Episode on a single static landscape.
template <StepRule Rule>
Trajectory run_episode(const EpisodeConfig& cfg, const Topology& topology, const NKLandscape& landscape, Rule& rule,
                       std::uint64_t seed) {
  return run_episode(cfg, topology, [&](int) -> const NKLandscape& { return landscape; }, rule, seed);
}

struct BatchOptions {
  int n_landscapes = 50;
  int reps_per_landscape = 100;
  std::uint64_t seed = 1;
  int workers = 1;
};

struct BatchStats {
  std::vector<double> mean_curve;
  std::vector<double> sem_curve;  // raw standard error of the mean over episodes
  double average_mean_payoff = 0.0;
  double final_mean_payoff = 0.0;
  int episodes = 0;
  std::vector<double> episode_averages;

  nlohmann::json summary_json() const {
    return {{"average_mean_payoff", average_mean_payoff},
            {"final_mean_payoff", final_mean_payoff},
            {"episodes", episodes},
            {"average_mean_payoff_sem", average_sem()}};
  }

  double average_sem() const {
    const auto m = episode_averages.size();
    if (m < 2) return 0.0;
    double mu = 0.0;
    for (double v : episode_averages) mu += v;
    mu /= static_cast<double>(m);
    double ss = 0.0;
    for (double v : episode_averages) ss += (v - mu) * (v - mu);
    return std::sqrt(ss / static_cast<double>(m - 1)) / std::sqrt(static_cast<double>(m));
  }

  /// "step,mean_payoff,sem" with steps numbered from 1.
  std::string curve_csv() const {
    std::string out = "step,mean_payoff,sem\n";
    for (std::size_t t = 0; t < mean_curve.size(); ++t)
      out += std::to_string(t + 1) + ',' + format_double(mean_curve[t]) + ',' + format_double(sem_curve[t]) + '\n';
    return out;
  }
};

/// Aggregates curves over episodes; reduction order is fixed by episode index.
inline BatchStats aggregate(const std::vector<Trajectory>& runs) {
  BatchStats st;
  if (runs.empty()) return st;
  const std::size_t steps = runs.front().mean_payoff.size();
  const auto m = static_cast<double>(runs.size());
  st.episodes = static_cast<int>(runs.size());
  st.mean_curve.assign(steps, 0.0);
  st.sem_curve.assign(steps, 0.0);
  for (const auto& r : runs)
    for (std::size_t t = 0; t < steps; ++t) st.mean_curve[t] += r.mean_payoff[t];
  for (auto& v : st.mean_curve) v /= m;
  if (runs.size() > 1) {
    for (const auto& r : runs)
      for (std::size_t t = 0; t < steps; ++t) {
        const double d = r.mean_payoff[t] - st.mean_curve[t];
        st.sem_curve[t] += d * d;
      }
    for (auto& v : st.sem_curve) v = std::sqrt(v / (m - 1.0)) / std::sqrt(m);
  }
  double total = 0.0;
  for (double v : st.mean_curve) total += v;
  st.average_mean_payoff = total / static_cast<double>(steps);
  st.final_mean_payoff = st.mean_curve.back();
  for (const auto& r : runs) {
    double a = 0.0;
    for (double v : r.mean_payoff) a += v;
    st.episode_averages.push_back(a / static_cast<double>(steps));
  }
  return st;
}

/// Landscape for segment r of batch landscape l.
inline std::uint64_t batch_landscape_seed(std::uint64_t seed, int landscape, int segment) {
  return derive_seed(seed, Stream::kBatchLandscape, landscape, segment);
}

/// n_landscapes x reps episodes of one rule. Reset schedules draw their
/// later-segment landscapes per batch landscape, shared across its
/// repetitions. `make_rule()` returns a fresh rule per episode so workers
/// never share mutable rule state. Deterministic for a given seed at any
/// worker count.
template <typename RuleFactory>
BatchStats run_batch(const EpisodeConfig& cfg, const Topology& topology, RuleFactory&& make_rule,
                     const BatchOptions& opt) {
  if (opt.n_landscapes < 1 || opt.reps_per_landscape < 1)
    throw std::invalid_argument("run_batch: need at least one landscape and one repetition");
  cfg.validate(topology);
  const auto reps = static_cast<std::size_t>(opt.reps_per_landscape);
  std::vector<Trajectory> runs(static_cast<std::size_t>(opt.n_landscapes) * reps);
  for (int l = 0; l < opt.n_landscapes; ++l) {
    std::vector<NKLandscape> lands;
    for (int r = 0; r < cfg.segments(); ++r)
      lands.push_back(cfg.make_landscape(batch_landscape_seed(opt.seed, l, r)));
    auto source = [&](int segment) -> const NKLandscape& { return lands[static_cast<std::size_t>(segment)]; };
    parallel_for(reps, opt.workers, [&](std::size_t rep) {
      auto rule = make_rule();
      runs[static_cast<std::size_t>(l) * reps + rep] =
          run_episode(cfg, topology, source, rule, derive_seed(opt.seed, Stream::kEpisode, l, rep));
    });
  }
  return aggregate(runs);
}

}  // namespace sociallearn
