#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sociallearn/io.hpp"
#include "sociallearn/nk_landscape.hpp"
#include "sociallearn/policy.hpp"
#include "sociallearn/probe.hpp"
#include "sociallearn/sim_engine.hpp"
#include "sociallearn/strategies.hpp"
#include "sociallearn/topology.hpp"
#include "sociallearn/trainer.hpp"

namespace sociallearn {

inline constexpr int kConfigSchema = 1;
inline constexpr const char* kCodeVersion = "1.0.0";
inline constexpr const char* kManifestFormat = "sociallearn.manifest";

/// Bad configuration: unknown key, malformed value, violated invariant,
/// missing referenced file. The CLI maps it to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class TopologyKind { kComplete, kMaxMC, kRegular, kFile };

struct TopologySpec {
  TopologyKind kind = TopologyKind::kComplete;
  int degree = 19;
  long swap_budget = 200000;
  std::string path;  // edge list, kind == kFile
};

struct ExperimentConfig {
  std::string preset = "default";
  EpisodeConfig env;
  TopologySpec topology;
  std::vector<StrategySpec> strategies = reference_baselines();
  int n_landscapes = 50;
  int reps = 100;
  std::uint64_t seed = 1;
  int workers = 1;
  TrainConfig train;  // train.env and train.policy.n_loci mirror env on sync()
  std::string checkpoint;
  std::string probe_kind = "both";
  int probe_p0 = 50;  // -1: sweep 0..100 in steps of probe_stride
  int probe_stride = 5;

  void sync() {
    train.env = env;
    train.policy.n_loci = env.n_loci;
  }
};

// --- value parsing -----------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

template <typename T>
T parse_integer(const std::string& key, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const std::invalid_argument&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

inline std::string bool_text(bool b) { return b ? "true" : "false"; }

// Runs fn and re-throws library argument errors as config errors.
template <typename Fn>
void as_config(const std::string& key, Fn&& fn) {
  try {
    fn();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

inline LandscapeSchedule parse_schedule(const std::string& v) {
  if (v == "static") return StaticSchedule{};
  // reset:PERIODxCOUNT, e.g. reset:50x4
  if (v.rfind("reset:", 0) == 0 || v.rfind("periodic:", 0) == 0) {
    const std::string body = v.substr(v.find(':') + 1);
    const auto x = body.find('x');
    if (x != std::string::npos)
      return PeriodicReset{parse_integer<int>("schedule", body.substr(0, x)),
                           parse_integer<int>("schedule", body.substr(x + 1))};
  }
  throw ConfigError("schedule: expected 'static' or 'reset:PERIODxCOUNT', got '" + v + "'");
}

inline std::string schedule_text(const LandscapeSchedule& s) {
  if (const auto* p = std::get_if<PeriodicReset>(&s))
    return "reset:" + std::to_string(p->period) + "x" + std::to_string(p->count);
  return "static";
}

inline std::string topology_text(const TopologySpec& t) {
  switch (t.kind) {
    case TopologyKind::kComplete: return "complete";
    case TopologyKind::kMaxMC: return "maxmc";
    case TopologyKind::kRegular: return "regular";
    case TopologyKind::kFile: return "file:" + t.path;
  }
  return "complete";
}

inline std::string curriculum_text(const std::vector<CurriculumSwitch>& c) {
  if (c.empty()) return "none";
  std::string s;
  for (const auto& sw : c) s += (s.empty() ? "" : ",") + std::to_string(sw.epoch) + ":" + std::to_string(sw.k);
  return s;
}

inline std::string strategies_text(const std::vector<StrategySpec>& v) {
  if (v == reference_baselines()) return "all";
  std::string s;
  for (const auto& sp : v) s += (s.empty() ? "" : ",") + sp.name();
  return s;
}

struct Key {
  const char* name;
  const char* doc;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Key int_key(const char* name, const char* doc, T ExperimentConfig::*member) {
  return {name, doc, [=](ExperimentConfig& c, const std::string& v) { c.*member = parse_integer<T>(name, v); },
          [=](const ExperimentConfig& c) { return std::to_string(c.*member); }};
}

template <typename Get>
Key int_ref(const char* name, const char* doc, Get field) {
  return {name, doc, [=](ExperimentConfig& c, const std::string& v) { field(c) = parse_integer<int>(name, v); },
          [=](const ExperimentConfig& c) { return std::to_string(field(c)); }};
}

template <typename Get>
Key real_key(const char* name, const char* doc, Get field) {
  return {name, doc, [=](ExperimentConfig& c, const std::string& v) { field(c) = parse_real(name, v); },
          [=](const ExperimentConfig& c) { return format_double(field(c)); }};
}

template <typename Get>
Key bool_key(const char* name, const char* doc, Get field) {
  return {name, doc, [=](ExperimentConfig& c, const std::string& v) { field(c) = parse_bool(name, v); },
          [=](const ExperimentConfig& c) { return bool_text(field(c)); }};
}

}  // namespace detail

/// Every recognised config key, in echo order.
inline const std::vector<detail::Key>& config_keys() {
  using namespace detail;
  using C = ExperimentConfig;
  static const std::vector<Key> keys = {
      // environment
      int_ref("n_loci", "solution length N", [](auto& c) -> auto& { return c.env.n_loci; }),
      int_ref("k", "landscape ruggedness K", [](auto& c) -> auto& { return c.env.k; }),
      {"k_convention", "others: K other loci per table (K+1 inputs); total: K inputs including the locus",
       [](C& c, const std::string& v) { as_config("k_convention", [&] { c.env.k_convention = parse_k_convention(v); }); },
       [](const C& c) { return k_convention_name(c.env.k_convention); }},
      int_ref("n_agents", "population size", [](auto& c) -> auto& { return c.env.n_agents; }),
      int_ref("sample_size", "neighbors observed per step (S)", [](auto& c) -> auto& { return c.env.sample_size; }),
      int_ref("steps", "episode length L", [](auto& c) -> auto& { return c.env.steps; }),
      {"schedule", "static | reset:PERIODxCOUNT (landscape redrawn every PERIOD steps)",
       [](C& c, const std::string& v) { c.env.schedule = parse_schedule(v); },
       [](const C& c) { return schedule_text(c.env.schedule); }},
      // network
      {"topology", "complete | maxmc | regular | file:PATH (edge list)",
       [](C& c, const std::string& v) {
         if (v == "complete") {
           c.topology.kind = TopologyKind::kComplete;
         } else if (v == "maxmc") {
           c.topology.kind = TopologyKind::kMaxMC;
         } else if (v == "regular") {
           c.topology.kind = TopologyKind::kRegular;
         } else if (v.rfind("file:", 0) == 0 && v.size() > 5) {
           c.topology.kind = TopologyKind::kFile;
           c.topology.path = v.substr(5);
         } else {
           throw ConfigError("topology: expected complete, maxmc, regular or file:PATH, got '" + v + "'");
         }
       },
       [](const C& c) { return topology_text(c.topology); }},
      int_ref("degree", "node degree for maxmc / regular", [](auto& c) -> auto& { return c.topology.degree; }),
      {"swap_budget", "maxmc double-edge-swap attempts",
       [](C& c, const std::string& v) { c.topology.swap_budget = parse_integer<long>("swap_budget", v); },
       [](const C& c) { return std::to_string(c.topology.swap_budget); }},
      // batches
      int_key("n_landscapes", "landscapes per batch", &C::n_landscapes),
      int_key("reps", "repetitions per landscape", &C::reps),
      {"strategies", "all | comma-separated baseline names (BI, BI-I, ..., RI)",
       [](C& c, const std::string& v) {
         if (v == "all") {
           c.strategies = reference_baselines();
           return;
         }
         c.strategies.clear();
         for (const auto& name : split(v, ',')) as_config("strategies", [&] { c.strategies.push_back(StrategySpec::parse(name)); });
         if (c.strategies.empty()) throw ConfigError("strategies: empty list");
       },
       [](const C& c) { return strategies_text(c.strategies); }},
      int_key("seed", "master seed; every stream derives from it", &C::seed),
      int_key("workers", "threads for batch simulation (results do not depend on it)", &C::workers),
      // policy
      {"features", "PIRF | PIR | PI",
       [](C& c, const std::string& v) { as_config("features", [&] { c.train.policy.features = FeatureFlags::parse(v); }); },
       [](const C& c) { return c.train.policy.features.name(); }},
      int_ref("hidden", "network width", [](auto& c) -> auto& { return c.train.policy.hidden; }),
      int_ref("heads", "attention heads", [](auto& c) -> auto& { return c.train.policy.heads; }),
      int_ref("blocks", "self-attention blocks", [](auto& c) -> auto& { return c.train.policy.blocks; }),
      real_key("actor_head_scale", "scale of the actor's last-layer init", [](auto& c) -> auto& { return c.train.policy.actor_head_scale; }),
      // training
      real_key("gamma", "discount", [](auto& c) -> auto& { return c.train.gamma; }),
      real_key("lambda", "GAE lambda", [](auto& c) -> auto& { return c.train.lambda; }),
      real_key("lr_actor", "actor learning rate", [](auto& c) -> auto& { return c.train.lr_actor; }),
      real_key("lr_critic", "critic learning rate", [](auto& c) -> auto& { return c.train.lr_critic; }),
      real_key("entropy_coef", "entropy bonus weight", [](auto& c) -> auto& { return c.train.entropy_coef; }),
      int_ref("max_epochs", "epoch limit", [](auto& c) -> auto& { return c.train.max_epochs; }),
      int_ref("minibatch_size", "transitions per update", [](auto& c) -> auto& { return c.train.minibatch_size; }),
      int_ref("updates_per_epoch", "minibatch updates per epoch", [](auto& c) -> auto& { return c.train.updates_per_epoch; }),
      int_ref("episodes_per_epoch", "episodes (each on its own landscape) pooled into one epoch's buffer",
              [](auto& c) -> auto& { return c.train.episodes_per_epoch; }),
      {"reward_mode", "per_step | final_scaled",
       [](C& c, const std::string& v) { as_config("reward_mode", [&] { c.train.reward_mode = parse_reward_mode(v); }); },
       [](const C& c) { return reward_mode_name(c.train.reward_mode); }},
      {"reward_scope", "individual | group",
       [](C& c, const std::string& v) { as_config("reward_scope", [&] { c.train.reward_scope = parse_reward_scope(v); }); },
       [](const C& c) { return reward_scope_name(c.train.reward_scope); }},
      int_ref("fixed_landscapes", "0: fresh landscape every epoch; m: cycle m fixed landscapes",
              [](auto& c) -> auto& { return c.train.fixed_landscapes; }),
      {"curriculum", "none | EPOCH:K[,EPOCH:K...] (K switches at EPOCH)",
       [](C& c, const std::string& v) {
         c.train.curriculum.clear();
         if (v == "none") return;
         for (const auto& item : split(v, ',')) {
           const auto colon = item.find(':');
           if (colon == std::string::npos) throw ConfigError("curriculum: expected EPOCH:K, got '" + item + "'");
           c.train.curriculum.push_back({parse_integer<int>("curriculum", item.substr(0, colon)),
                                         parse_integer<int>("curriculum", item.substr(colon + 1))});
         }
       },
       [](const C& c) { return curriculum_text(c.train.curriculum); }},
      bool_key("normalize_advantages", "per-minibatch advantage standardization",
               [](auto& c) -> auto& { return c.train.normalize_advantages; }),
      real_key("reward_scale", "reward multiplier before advantage estimation", [](auto& c) -> auto& { return c.train.reward_scale; }),
      bool_key("early_stopping", "stop on a payoff plateau", [](auto& c) -> auto& { return c.train.early_stopping; }),
      int_ref("plateau_window", "epochs averaged by the plateau test", [](auto& c) -> auto& { return c.train.plateau_window; }),
      real_key("plateau_min_delta", "improvement that resets patience", [](auto& c) -> auto& { return c.train.plateau_min_delta; }),
      int_ref("plateau_patience", "epochs without improvement before stopping", [](auto& c) -> auto& { return c.train.plateau_patience; }),
      int_ref("checkpoint_every", "epochs between checkpoints (0: final only)", [](auto& c) -> auto& { return c.train.checkpoint_every; }),
      // eval / probe
      {"checkpoint", "policy checkpoint for eval and probe",
       [](C& c, const std::string& v) { c.checkpoint = v; }, [](const C& c) { return c.checkpoint; }},
      {"probe_kind", "bi | cf | both",
       [](C& c, const std::string& v) {
         if (v != "bi" && v != "cf" && v != "both") throw ConfigError("probe_kind: expected bi, cf or both, got '" + v + "'");
         c.probe_kind = v;
       },
       [](const C& c) { return c.probe_kind; }},
      {"probe_p0", "self payoff of the probe templates, or 'sweep'",
       [](C& c, const std::string& v) { c.probe_p0 = v == "sweep" ? -1 : parse_integer<int>("probe_p0", v); },
       [](const C& c) { return c.probe_p0 < 0 ? std::string("sweep") : std::to_string(c.probe_p0); }},
      int_key("probe_stride", "voxel grid stride", &C::probe_stride),
  };
  return keys;
}

inline const detail::Key& find_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (name == k.name) return k;
  throw ConfigError("unknown config key '" + name + "'");
}

// --- presets -----------------------------------------------------------------

// Desk-scale learning setup (N=8, K=3, 30 agents, L=50). Shorter horizon (gamma = lambda = 0.9), several
// landscapes per epoch and few updates per buffer keep the unclipped
// ratio from chasing one landscape's optimum.
inline constexpr const char* kReducedFragment =
    "n_loci = 8\nk = 3\nn_agents = 30\nsteps = 50\n"
    "n_landscapes = 50\nreps = 10\n"
    "hidden = 16\nheads = 4\n"
    "gamma = 0.9\nlambda = 0.9\n"
    "lr_actor = 0.001\nlr_critic = 0.001\nentropy_coef = 0.001\n"
    "max_epochs = 600\nepisodes_per_epoch = 4\nminibatch_size = 1000\nupdates_per_epoch = 4\n"
    "early_stopping = false\ncheckpoint_every = 100\n";

/// Named config fragments, applied on top of the defaults.
inline const std::map<std::string, std::string>& presets() {
  static const std::map<std::string, std::string> p = {
      {"default", ""},
      {"maxmc", "topology = maxmc\ndegree = 19\n"},
      {"l50r4", "schedule = reset:50x4\nsteps = 200\n"},
      {"k3l400", "k = 3\nsteps = 400\nreps = 10\n"},
      {"k11", "k = 11\n"},
      {"k3k11_e1000", "k = 3\ncurriculum = 1000:11\n"},
      {"k3k11_e2500", "k = 3\ncurriculum = 2500:11\n"},
      {"k3k11_e5500", "k = 3\ncurriculum = 5500:11\n"},
      {"fixed1", "fixed_landscapes = 1\n"},
      {"fixed10", "fixed_landscapes = 10\n"},
      {"group_reward", "reward_scope = group\n"},
      {"pirf", "features = PIRF\n"},
      {"pir", "features = PIR\n"},
      {"pi", "features = PI\n"},
      {"reduced", kReducedFragment},
      {"reduced_fixed1", std::string(kReducedFragment) + "fixed_landscapes = 1\nmax_epochs = 300\n"},
  };
  return p;
}

inline std::string preset_names() {
  std::string s;
  for (const auto& [name, _] : presets()) s += (s.empty() ? "" : ", ") + name;
  return s;
}

// --- loading -----------------------------------------------------------------

/// `key = value` lines; '#' starts a comment. Returns pairs in file order.
inline std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text,
                                                                         const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(no) + ": expected 'key = value'");
    out.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return out;
}

inline void apply_preset(ExperimentConfig& cfg, const std::string& name) {
  const std::string key = detail::lower(name);
  const auto it = presets().find(key);
  if (it == presets().end()) throw ConfigError("unknown preset '" + name + "'; available presets: " + preset_names());
  for (const auto& [k, v] : parse_key_values(it->second, "preset " + key)) find_key(k).set(cfg, v);
  cfg.preset = key;
}

inline void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  find_key(key).set(cfg, value);
}

/// Checks every invariant the commands rely on that can be checked without
/// running anything.
inline void validate(ExperimentConfig& cfg) {
  cfg.sync();
  const auto& e = cfg.env;
  if (e.n_loci < 1 || e.n_loci > Solution::kMaxLoci) throw ConfigError("n_loci must be in [1, 64]");
  if (e.landscape_inputs() < 1 || e.landscape_inputs() > e.n_loci)
    throw ConfigError("k out of range for n_loci under k_convention = " + k_convention_name(e.k_convention));
  for (const auto& c : cfg.train.curriculum) {
    EpisodeConfig probe = e;
    probe.k = c.k;
    if (probe.landscape_inputs() < 1 || probe.landscape_inputs() > e.n_loci)
      throw ConfigError("curriculum k out of range for n_loci");
  }
  if (e.n_agents < 2) throw ConfigError("n_agents must be >= 2");
  if (e.steps < 1 || e.sample_size < 1) throw ConfigError("steps and sample_size must be >= 1");
  if (const auto* p = std::get_if<PeriodicReset>(&e.schedule); p && (p->period < 1 || p->period * p->count != e.steps))
    throw ConfigError("schedule: period x count must equal steps");
  if (cfg.n_landscapes < 1 || cfg.reps < 1) throw ConfigError("n_landscapes and reps must be >= 1");
  if (cfg.workers < 1) throw ConfigError("workers must be >= 1");
  if (cfg.topology.kind == TopologyKind::kFile && !std::filesystem::exists(cfg.topology.path))
    throw ConfigError("topology file not found: " + cfg.topology.path);
  if ((cfg.topology.kind == TopologyKind::kMaxMC || cfg.topology.kind == TopologyKind::kRegular) &&
      (cfg.topology.degree < cfg.env.sample_size || cfg.topology.degree >= cfg.env.n_agents))
    throw ConfigError("degree must be in [sample_size, n_agents)");
  if (cfg.topology.kind == TopologyKind::kComplete && e.n_agents - 1 < e.sample_size)
    throw ConfigError("sample_size exceeds the number of neighbors");
  if (!cfg.checkpoint.empty() && !std::filesystem::exists(cfg.checkpoint))
    throw ConfigError("checkpoint not found: " + cfg.checkpoint);
  if (cfg.probe_stride < 1) throw ConfigError("probe_stride must be >= 1");
  if (cfg.probe_p0 > kProbePayoffMax) throw ConfigError("probe_p0 must be in [0, 100] or 'sweep'");
  detail::as_config("train", [&] { cfg.train.validate(); });
  detail::as_config("policy", [&] { NetworkShape s = cfg.train.policy.actor_shape(); SetNetwork check(s); });
}

/// Layering: defaults, then the preset, then config-file keys in order.
/// A config file must state `schema = 1`; its own `preset` key (if any) is
/// applied before its other keys. `preset` may also come from the caller.
inline ExperimentConfig load_config(const std::string& text, const std::string& origin,
                                    const std::string& preset_override = "") {
  ExperimentConfig cfg;
  auto kv = parse_key_values(text, origin);
  std::string preset = preset_override;
  bool has_schema = text.empty();
  std::vector<std::pair<std::string, std::string>> rest;
  for (auto& [k, v] : kv) {
    if (k == "schema") {
      if (v != std::to_string(kConfigSchema))
        throw ConfigError(origin + ": unsupported schema '" + v + "' (expected " + std::to_string(kConfigSchema) + ")");
      has_schema = true;
    } else if (k == "preset") {
      if (!preset_override.empty() && detail::lower(v) != detail::lower(preset_override))
        throw ConfigError("--preset " + preset_override + " conflicts with preset = " + v + " in " + origin);
      preset = v;
    } else {
      rest.emplace_back(k, v);
    }
  }
  if (!has_schema) throw ConfigError(origin + ": missing 'schema = " + std::to_string(kConfigSchema) + "'");
  if (!preset.empty()) apply_preset(cfg, preset);
  for (const auto& [k, v] : rest) set_key(cfg, k, v);
  cfg.sync();
  return cfg;
}

inline ExperimentConfig load_config_file(const std::string& path, const std::string& preset_override = "") {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  auto cfg = load_config(text, path, preset_override);
  if (text.empty()) throw ConfigError(path + ": empty config");
  return cfg;
}

/// Complete echo; loading it back reproduces the configuration.
inline std::string config_text(const ExperimentConfig& cfg) {
  std::string out = "schema = " + std::to_string(kConfigSchema) + "\n# preset: " + cfg.preset + "\n";
  for (const auto& k : config_keys()) {
    const std::string v = k.get(cfg);
    if (v.empty()) continue;  // unset path
    out += std::string(k.name) + " = " + v + "\n";
  }
  return out;
}

// --- topology ----------------------------------------------------------------

inline Topology build_topology(const ExperimentConfig& cfg) {
  const auto seed = derive_seed(cfg.seed, Stream::kTopology);
  switch (cfg.topology.kind) {
    case TopologyKind::kComplete: return complete_topology(cfg.env.n_agents);
    case TopologyKind::kMaxMC: return max_mean_clustering(cfg.env.n_agents, cfg.topology.degree, cfg.topology.swap_budget, seed);
    case TopologyKind::kRegular: return random_regular(cfg.env.n_agents, cfg.topology.degree, seed);
    case TopologyKind::kFile: {
      Topology t = load_edge_list(cfg.topology.path);
      if (t.size() != cfg.env.n_agents)
        throw ConfigError("topology file has " + std::to_string(t.size()) + " nodes but n_agents = " +
                          std::to_string(cfg.env.n_agents));
      return t;
    }
  }
  throw ConfigError("bad topology kind");
}

// --- run directories ---------------------------------------------------------

/// Owns an output directory for one command: a lock file while running, a
/// manifest (config echo, seeds, code version, checksums) when finalized.
/// Finalized directories are never written again.
class RunDir {
 public:
  RunDir(std::string dir, std::string command) : dir_(std::move(dir)), command_(std::move(command)) {
    namespace fs = std::filesystem;
    fs::create_directories(dir_);
    if (fs::exists(path("manifest.json")))
      throw std::runtime_error("run directory " + dir_ + " is already finalized; choose a new --out");
    lock_ = path(".lock");
    std::FILE* f = std::fopen(lock_.c_str(), "wx");
    if (!f) throw std::runtime_error("run directory " + dir_ + " is locked by another process (" + lock_ + ")");
    std::fclose(f);
  }
  RunDir(const RunDir&) = delete;
  RunDir& operator=(const RunDir&) = delete;
  ~RunDir() {
    std::error_code ec;
    std::filesystem::remove(lock_, ec);
  }

  const std::string& dir() const noexcept { return dir_; }
  std::string path(const std::string& rel) const { return (std::filesystem::path(dir_) / rel).string(); }

  void write(const std::string& rel, const std::string& contents) const {
    std::filesystem::create_directories(std::filesystem::path(path(rel)).parent_path());
    write_file(path(rel), contents);
  }

  /// Writes config.conf and manifest.json; checksums every file in the
  /// directory except the manifest and lock.
  void finalize(const ExperimentConfig& cfg, const nlohmann::json& extra = nlohmann::json::object()) const {
    namespace fs = std::filesystem;
    write("config.conf", config_text(cfg));
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir_)) {
      if (!e.is_regular_file()) continue;
      const std::string rel = fs::relative(e.path(), dir_).generic_string();
      if (rel == "manifest.json" || rel == ".lock") continue;
      files.push_back(rel);
    }
    std::sort(files.begin(), files.end());
    nlohmann::json sums = nlohmann::json::object();
    for (const auto& f : files) sums[f] = fnv1a_hex(read_file(path(f)));
    nlohmann::json m = {{"format", kManifestFormat},
                        {"version", 1},
                        {"command", command_},
                        {"code_version", kCodeVersion},
                        {"config_schema", kConfigSchema},
                        {"config", config_text(cfg)},
                        {"seeds", {{"seed", cfg.seed}}},
                        {"workers", cfg.workers},
                        {"checksum", "fnv1a64"},
                        {"files", sums}};
    for (const auto& [k, v] : extra.items()) m[k] = v;
    write("manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string dir_;
  std::string command_;
  std::string lock_;
};

// --- commands ----------------------------------------------------------------

/// Landscapes of the batch (segment 0 of each batch landscape), as JSON plus
/// an index CSV.
inline void cmd_landscape_gen(const ExperimentConfig& cfg, const std::string& out) {
  RunDir run(out, "landscape gen");
  std::string csv = "index,seed,inputs,p_max_raw,argmax\n";
  for (int l = 0; l < cfg.n_landscapes; ++l) {
    const auto seed = batch_landscape_seed(cfg.seed, l, 0);
    const NKLandscape land = cfg.env.make_landscape(seed);
    run.write("landscapes/landscape_" + std::to_string(l) + ".json", land.to_json().dump() + "\n");
    csv += std::to_string(l) + ',' + std::to_string(seed) + ',' + std::to_string(land.k_inputs()) + ',' +
           format_double(land.p_max_raw()) + ',' + land.global_argmax().first.to_string() + '\n';
  }
  run.write("landscapes.csv", csv);
  run.finalize(cfg);
}

struct RankedRow {
  std::string name;
  BatchStats stats;
};

/// Ranked by average mean payoff, ties by name.
inline std::string summary_csv(std::vector<RankedRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const RankedRow& a, const RankedRow& b) {
    if (a.stats.average_mean_payoff != b.stats.average_mean_payoff)
      return a.stats.average_mean_payoff > b.stats.average_mean_payoff;
    return a.name < b.name;
  });
  std::string s = "rank,strategy,average_mean_payoff,sem,final_mean_payoff,episodes\n";
  for (std::size_t i = 0; i < rows.size(); ++i)
    s += std::to_string(i + 1) + ',' + rows[i].name + ',' + format_double(rows[i].stats.average_mean_payoff) + ',' +
         format_double(rows[i].stats.average_sem()) + ',' + format_double(rows[i].stats.final_mean_payoff) + ',' +
         std::to_string(rows[i].stats.episodes) + '\n';
  return s;
}

inline BatchOptions batch_options(const ExperimentConfig& cfg) {
  return {cfg.n_landscapes, cfg.reps, cfg.seed, cfg.workers};
}

inline std::vector<RankedRow> run_baselines(const ExperimentConfig& cfg, const Topology& topo,
                                            const std::function<void(const std::string&)>& log = {}) {
  std::vector<RankedRow> rows;
  for (const auto& spec : cfg.strategies) {
    if (log) log(spec.name());
    rows.push_back({spec.name(), run_batch(cfg.env, topo, [&] { return BaselineRule{spec}; }, batch_options(cfg))});
  }
  return rows;
}

inline std::vector<RankedRow> cmd_baselines(const ExperimentConfig& cfg, const std::string& out,
                                            const std::function<void(const std::string&)>& log = {}) {
  RunDir run(out, "baselines");
  const Topology topo = build_topology(cfg);
  auto rows = run_baselines(cfg, topo, log);
  nlohmann::json summary = nlohmann::json::object();
  for (const auto& r : rows) {
    run.write("curves/" + r.name + ".csv", r.stats.curve_csv());
    summary[r.name] = r.stats.summary_json();
  }
  run.write("summary.csv", summary_csv(rows));
  run.write("summary.json", nlohmann::json{{"strategies", summary}, {"env", cfg.env.to_json()}, {"seed", cfg.seed}}.dump(2) + "\n");
  run.finalize(cfg);
  return rows;
}

inline TrainResult cmd_train(const ExperimentConfig& cfg, const std::string& out,
                             const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  RunDir run(out, "train");
  const Topology topo = build_topology(cfg);
  TrainResult res = train(cfg.train, topo, cfg.seed, {run.dir(), on_epoch});
  run.finalize(cfg, {{"epochs", res.metrics.size()}, {"stopped_early", res.stopped_early}});
  return res;
}

/// Loads a checkpoint and insists it was trained for this N.
inline Policy load_policy_for(const ExperimentConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("a checkpoint is required (--checkpoint or checkpoint = PATH)");
  Checkpoint c = load_checkpoint(cfg.checkpoint);
  if (c.policy.n_loci() != cfg.env.n_loci)
    throw ConfigError("checkpoint was trained with N = " + std::to_string(c.policy.n_loci()) +
                      " but the config has n_loci = " + std::to_string(cfg.env.n_loci));
  return c.policy;
}

inline BatchStats evaluate_policy(const Policy& policy, const ExperimentConfig& cfg, const Topology& topo) {
  return run_batch(cfg.env, topo, [&] { return PolicyRule(policy); }, batch_options(cfg));
}

inline BatchStats cmd_eval(const ExperimentConfig& cfg, const std::string& out) {
  const Policy policy = load_policy_for(cfg);
  RunDir run(out, "eval");
  const Topology topo = build_topology(cfg);
  BatchStats st = evaluate_policy(policy, cfg, topo);
  run.write("curve.csv", st.curve_csv());
  run.write("summary.json", nlohmann::json{{"checkpoint", cfg.checkpoint},
                                           {"policy", st.summary_json()},
                                           {"env", cfg.env.to_json()},
                                           {"seed", cfg.seed}}
                                .dump(2) + "\n");
  run.finalize(cfg);
  return st;
}

/// Probe exports for a checkpoint, or for an analytic baseline oracle when
/// `oracle` names a strategy.
inline void cmd_probe(const ExperimentConfig& cfg, const std::string& out, const std::string& oracle = "") {
  ProbePolicy probe;
  Policy policy;
  FeatureFlags flags = cfg.train.policy.features;
  int n = cfg.env.n_loci;
  if (!oracle.empty()) {
    StrategySpec spec;
    detail::as_config("oracle", [&] { spec = StrategySpec::parse(oracle); });
    probe = analytic_oracle(spec);
  } else {
    policy = load_policy_for(cfg);
    flags = policy.config().features;
    n = policy.n_loci();
    probe = neural_probe(policy);
  }
  if (n < 4) throw ConfigError("probe templates need n_loci >= 4");
  RunDir run(out, "probe");
  std::vector<int> p0s;
  if (cfg.probe_p0 < 0) {
    for (int p = 0; p <= kProbePayoffMax; p += cfg.probe_stride) p0s.push_back(p);
  } else {
    p0s.push_back(cfg.probe_p0);
  }
  for (int p0 : p0s) {
    const std::string tag = "p0_" + std::to_string(p0);
    if (cfg.probe_kind != "cf") {
      run.write("voxels_" + tag + ".csv", voxel_csv(voxel_diagram(probe, p0, n, flags, cfg.probe_stride)));
      run.write("diagram_bi_" + tag + ".csv", diagram_csv(output_diagram(probe, TemplateKind::kBI, p0, n, flags)));
    }
    if (cfg.probe_kind != "bi")
      run.write("diagram_cf_" + tag + ".csv", diagram_csv(output_diagram(probe, TemplateKind::kCF, p0, n, flags)));
  }
  run.write("regions.json", regions_json(region_averages(probe, n, flags)).dump(2) + "\n");
  run.finalize(cfg, {{"source", oracle.empty() ? cfg.checkpoint : "oracle:" + oracle}});
}

/// Collects summaries from finished run directories into one ranked table.
inline std::string cmd_report(const ExperimentConfig& cfg, const std::vector<std::string>& runs, const std::string& out) {
  std::vector<std::tuple<std::string, std::string, double, double>> rows;  // run, name, payoff, sem
  std::string train_rows;
  for (const auto& dir : runs) {
    namespace fs = std::filesystem;
    const auto manifest_path = (fs::path(dir) / "manifest.json").string();
    if (!fs::exists(manifest_path)) throw ConfigError("not a finished run directory: " + dir);
    const auto manifest = nlohmann::json::parse(read_file(manifest_path));
    const std::string command = manifest.at("command").get<std::string>();
    const auto summary_path = (fs::path(dir) / "summary.json").string();
    if (command == "baselines") {
      const auto s = nlohmann::json::parse(read_file(summary_path));
      for (const auto& [name, v] : s.at("strategies").items())
        rows.emplace_back(dir, name, v.at("average_mean_payoff").get<double>(), v.at("average_mean_payoff_sem").get<double>());
    } else if (command == "eval") {
      const auto s = nlohmann::json::parse(read_file(summary_path));
      rows.emplace_back(dir, "policy", s.at("policy").at("average_mean_payoff").get<double>(),
                        s.at("policy").at("average_mean_payoff_sem").get<double>());
    } else if (command == "train") {
      std::istringstream in(read_file((fs::path(dir) / "metrics.csv").string()));
      std::string line;
      std::string last;
      while (std::getline(in, line))
        if (!line.empty()) last = line;
      train_rows += dir + ',' + last + '\n';
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return std::get<2>(a) > std::get<2>(b); });
  std::string csv = "rank,run,name,average_mean_payoff,sem\n";
  std::string md = "| rank | run | name | average mean payoff | sem |\n|---|---|---|---|---|\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& [run, name, pay, sem] = rows[i];
    csv += std::to_string(i + 1) + ',' + run + ',' + name + ',' + format_double(pay) + ',' + format_double(sem) + '\n';
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f | %.2f", pay, sem);
    md += "| " + std::to_string(i + 1) + " | " + run + " | " + name + " | " + buf + " |\n";
  }
  if (!train_rows.empty()) {
    md += "\nLast training epoch per run:\n\n```\nrun," + std::string(kMetricsHeader) + "\n" + train_rows + "```\n";
  }
  RunDir run(out, "report");
  run.write("report.csv", csv);
  run.write("report.md", md);
  run.finalize(cfg, {{"inputs", runs}});
  return csv;
}

}  // namespace sociallearn
