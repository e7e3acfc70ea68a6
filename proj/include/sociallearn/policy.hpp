#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sociallearn/io.hpp"
#include "sociallearn/nk_landscape.hpp"
#include "sociallearn/observation.hpp"
#include "sociallearn/rng.hpp"
#include "sociallearn/set_network.hpp"
#include "sociallearn/sim_engine.hpp"

namespace sociallearn {

struct PolicyConfig {
  int n_loci = 15;
  FeatureFlags features;
  int hidden = 64;
  int heads = 4;
  int blocks = 1;
  double actor_head_scale = 0.1;  // small last layer: fresh actor is close to p = 0.5 everywhere

  FeatureLayout layout() const { return {n_loci, features}; }

  NetworkShape actor_shape() const { return {layout().width, hidden, heads, blocks, 2 * n_loci, layout().indicator}; }
  NetworkShape critic_shape() const { return {layout().width, hidden, heads, blocks, 1, layout().indicator}; }

  nlohmann::json to_json() const {
    return {{"n_loci", n_loci},
            {"features",
             {{"payoff", features.include_payoff},
              {"self_indicator", features.include_self_indicator},
              {"ranking", features.include_ranking},
              {"frequency", features.include_frequency}}},
            {"hidden", hidden},
            {"heads", heads},
            {"blocks", blocks},
            {"actor_head_scale", actor_head_scale}};
  }

  static PolicyConfig from_json(const nlohmann::json& j) {
    PolicyConfig c;
    c.n_loci = j.at("n_loci").get<int>();
    const auto& f = j.at("features");
    c.features = {f.at("payoff").get<bool>(), f.at("self_indicator").get<bool>(), f.at("ranking").get<bool>(),
                  f.at("frequency").get<bool>()};
    c.hidden = j.at("hidden").get<int>();
    c.heads = j.at("heads").get<int>();
    c.blocks = j.at("blocks").get<int>();
    c.actor_head_scale = j.at("actor_head_scale").get<double>();
    return c;
  }

  friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

/// Actor and critic with separate parameters. Logits are laid out as
/// [class 0 for d = 0..N-1, class 1 for d = 0..N-1].
class Policy {
 public:
  Policy() = default;
  Policy(const PolicyConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), actor_(cfg.actor_shape()), critic_(cfg.critic_shape()) {
    if (cfg.n_loci < 1 || cfg.n_loci > Solution::kMaxLoci) throw std::invalid_argument("Policy: bad n_loci");
    actor_.initialize(derive_seed(seed, 0), cfg.actor_head_scale);
    critic_.initialize(derive_seed(seed, 1), 1.0);
  }

  const PolicyConfig& config() const noexcept { return cfg_; }
  int n_loci() const noexcept { return cfg_.n_loci; }
  SetNetwork& actor() noexcept { return actor_; }
  SetNetwork& critic() noexcept { return critic_; }
  const SetNetwork& actor() const noexcept { return actor_; }
  const SetNetwork& critic() const noexcept { return critic_; }

  std::span<const double> actor_forward(const ObservationMatrix& obs, SetNetwork::Workspace& ws) const {
    check(obs);
    return actor_.forward(obs.data, obs.rows, ws);
  }

  double critic_value(const ObservationMatrix& obs, SetNetwork::Workspace& ws) const {
    check(obs);
    return critic_.forward(obs.data, obs.rows, ws)[0];
  }

  friend bool operator==(const Policy& a, const Policy& b) {
    return a.cfg_ == b.cfg_ && std::ranges::equal(a.actor_.params(), b.actor_.params()) &&
           std::ranges::equal(a.critic_.params(), b.critic_.params());
  }

 private:
  void check(const ObservationMatrix& obs) const {
    if (obs.cols != cfg_.layout().width || obs.layout.n_loci != cfg_.n_loci)
      throw std::invalid_argument("policy: observation width does not match the network");
  }

  PolicyConfig cfg_;
  SetNetwork actor_;
  SetNetwork critic_;
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^x) without overflow
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

/// Probability of a 1 in each dimension: softmax over the logit pair.
inline std::vector<double> bit_probabilities(std::span<const double> logits) {
  if (logits.size() % 2 != 0) throw std::invalid_argument("bit_probabilities: expected 2 x N logits");
  const std::size_t n = logits.size() / 2;
  std::vector<double> p(n);
  for (std::size_t d = 0; d < n; ++d) p[d] = sigmoid(logits[n + d] - logits[d]);
  return p;
}

/// Binary entropy in nats of one dimension, 0 ln 0 = 0.
inline double binary_entropy(double p) {
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log1p(-p);
  return h;
}

/// Mean binary entropy over dimensions.
inline double output_entropy(std::span<const double> p1) {
  if (p1.empty()) return 0.0;
  double h = 0.0;
  for (double p : p1) h += binary_entropy(p);
  return h / static_cast<double>(p1.size());
}

/// log pi(a | logits) = sum over dimensions of the chosen class log-probability.
inline double log_prob(std::span<const double> logits, const Solution& action) {
  const std::size_t n = logits.size() / 2;
  if (static_cast<std::size_t>(action.size()) != n) throw std::invalid_argument("log_prob: action length mismatch");
  double lp = 0.0;
  for (std::size_t d = 0; d < n; ++d) {
    const double z = logits[n + d] - logits[d];
    lp -= action[static_cast<int>(d)] ? softplus(-z) : softplus(z);
  }
  return lp;
}

inline Solution sample_bits(std::span<const double> p1, Rng& rng) {
  Solution x(static_cast<int>(p1.size()));
  for (std::size_t d = 0; d < p1.size(); ++d)
    if (rng.bernoulli(p1[d])) x.set(static_cast<int>(d), true);
  return x;
}

/// Samples every bit independently, then keeps the sample only if it is
/// strictly better. Returns (new state, raw sample).
inline std::pair<AgentState, Solution> sample_and_correct(std::span<const double> p1, const AgentState& current,
                                                          const NKLandscape& landscape, Rng& rng) {
  if (static_cast<int>(p1.size()) != landscape.n_loci())
    throw std::invalid_argument("sample_and_correct: probability vector length mismatch");
  Solution x = sample_bits(p1, rng);
  const double p = landscape.payoff(x);
  if (p > current.payoff) return {{x, p}, x};
  return {current, x};
}

/// A frozen policy as a simulation rule.
class PolicyRule {
 public:
  explicit PolicyRule(const Policy& policy) : policy_(&policy) {}

  AgentState operator()(const StepContext& ctx, Rng& rng) {
    const auto obs = build_observation(ctx.self, ctx.sample, policy_->config().features);
    const auto p1 = bit_probabilities(policy_->actor_forward(obs, ws_));
    return sample_and_correct(p1, ctx.self, ctx.landscape, rng).first;
  }

 private:
  const Policy* policy_;
  SetNetwork::Workspace ws_;
};

// --- checkpoints ---------------------------------------------------------

struct Checkpoint {
  Policy policy;
  int epoch = 0;
  nlohmann::json train_config;  // echo of the run's configuration
};

inline constexpr const char* kCheckpointFormat = "sociallearn.checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  auto arr = [](std::span<const double> v) { return nlohmann::json(std::vector<double>(v.begin(), v.end())); };
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"epoch", c.epoch},
          {"policy", c.policy.config().to_json()},
          {"actor", arr(c.policy.actor().params())},
          {"critic", arr(c.policy.critic().params())},
          {"train_config", c.train_config}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kCheckpointFormat) throw std::runtime_error("not a checkpoint file");
  if (j.value("version", 0) != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(j.value("version", 0)));
  Checkpoint c;
  c.policy = Policy(PolicyConfig::from_json(j.at("policy")), 0);
  c.epoch = j.at("epoch").get<int>();
  c.train_config = j.value("train_config", nlohmann::json::object());
  auto fill = [](const nlohmann::json& src, std::span<double> dst, const char* what) {
    if (!src.is_array() || src.size() != dst.size())
      throw std::runtime_error(std::string("checkpoint: ") + what + " parameter count mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i].get<double>();
  };
  fill(j.at("actor"), c.policy.actor().params(), "actor");
  fill(j.at("critic"), c.policy.critic().params(), "critic");
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  write_file(path, checkpoint_to_json(c).dump() + '\n');
}

inline Checkpoint load_checkpoint(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("checkpoint " + path + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace sociallearn
