#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sociallearn/io.hpp"
#include "sociallearn/observation.hpp"
#include "sociallearn/policy.hpp"
#include "sociallearn/rng.hpp"
#include "sociallearn/solution.hpp"
#include "sociallearn/strategies.hpp"

namespace sociallearn {

enum class TemplateKind { kBI, kCF };

inline std::string template_kind_name(TemplateKind k) { return k == TemplateKind::kBI ? "BI" : "CF"; }
inline TemplateKind parse_template_kind(const std::string& s) {
  if (s == "BI" || s == "bi") return TemplateKind::kBI;
  if (s == "CF" || s == "cf") return TemplateKind::kCF;
  throw std::invalid_argument("template kind must be BI or CF, got '" + s + "'");
}

/// Fixed solutions of a probe template. `best` is x_1, `second` x_2, `third`
/// x_3 (equal to x_2 in the CF template).
struct TemplateSolutions {
  Solution self, best, second, third;
};

struct CanonicalTemplates {
  TemplateSolutions bi;
  TemplateSolutions cf;
};

/// x_self = 0...0, x_1 = 1...1, x_2 = 1010..., x_3 = floor(N/2) zeros then
/// ceil(N/2) ones. Pairwise distinct for N >= 4.
inline CanonicalTemplates canonical_templates(int n) {
  if (n < 4 || n > Solution::kMaxLoci) throw std::invalid_argument("canonical_templates: need 4 <= N <= 64");
  Solution self(n), ones(n), alt(n), half(n);
  for (int d = 0; d < n; ++d) {
    ones.set(d, true);
    alt.set(d, d % 2 == 0);
    half.set(d, d >= n / 2);
  }
  return {{self, ones, alt, half}, {self, ones, alt, alt}};
}

/// Template for region averages. The best solution must contain both zeros
/// and ones so that "non-best" and "best" dimensions both exist, so x_1 is
/// the alternating vector here and x_2 = x_3 = all ones (their payoffs are
/// held at 0 during the sweep).
inline TemplateSolutions region_template(int n) {
  const auto c = canonical_templates(n);
  return {c.bi.self, c.bi.second, c.bi.best, c.bi.best};
}

inline constexpr int kProbePayoffMax = 100;

/// All (p_1, p_2, p_3) with 0 <= p_3 <= p_2 <= p_1 <= p_max, ascending
/// lexicographically in (p_1, p_2, p_3).
inline std::vector<std::array<int, 3>> enumerate_bi_inputs(int p0, int p_max = kProbePayoffMax) {
  if (p_max < 0 || p0 < 0 || p0 > p_max) throw std::invalid_argument("enumerate_bi_inputs: need 0 <= p0 <= p_max");
  std::vector<std::array<int, 3>> out;
  for (int p1 = 0; p1 <= p_max; ++p1)
    for (int p2 = 0; p2 <= p1; ++p2)
      for (int p3 = 0; p3 <= p2; ++p3) out.push_back({p1, p2, p3});
  return out;
}

/// All (p_1, p_2) with 0 <= p_2 < p_1 <= p_max (p_3 = p_2), ascending
/// lexicographically.
inline std::vector<std::array<int, 2>> enumerate_cf_inputs(int p0, int p_max = kProbePayoffMax) {
  if (p_max < 0 || p0 < 0 || p0 > p_max) throw std::invalid_argument("enumerate_cf_inputs: need 0 <= p0 <= p_max");
  std::vector<std::array<int, 2>> out;
  for (int p1 = 1; p1 <= p_max; ++p1)
    for (int p2 = 0; p2 < p1; ++p2) out.push_back({p1, p2});
  return out;
}

/// One synthetic decision: states plus their encoding.
struct ProbeCase {
  AgentState self;
  std::vector<AgentState> neighbors;
  ObservationMatrix obs;
};

/// `order` permutes the neighbor rows (x_1, x_2, x_3).
inline ProbeCase make_probe_case(const TemplateSolutions& t, int p0, int p1, int p2, int p3, const FeatureFlags& flags,
                                 std::array<int, 3> order = {0, 1, 2}) {
  const std::array<AgentState, 3> nb{{{t.best, double(p1)}, {t.second, double(p2)}, {t.third, double(p3)}}};
  ProbeCase c;
  c.self = {t.self, double(p0)};
  for (int i : order) c.neighbors.push_back(nb[static_cast<std::size_t>(i)]);
  c.obs = build_observation(c.self, c.neighbors, flags);
  return c;
}

/// Anything that maps a decision to per-bit probabilities of producing 1.
using ProbePolicy = std::function<std::vector<double>(const ProbeCase&)>;

/// The trained actor, read through the same observation encoding used in training.
inline ProbePolicy neural_probe(const Policy& policy) {
  auto ws = std::make_shared<SetNetwork::Workspace>();
  return [&policy, ws](const ProbeCase& c) { return bit_probabilities(policy.actor_forward(c.obs, *ws)); };
}

namespace detail {

inline std::vector<double> bits_of(const Solution& x) {
  std::vector<double> v(static_cast<std::size_t>(x.size()));
  for (int d = 0; d < x.size(); ++d) v[static_cast<std::size_t>(d)] = x[d];
  return v;
}

// Neighbors in a canonical order so sums do not depend on the given order.
inline std::vector<AgentState> sorted_neighbors(const ProbeCase& c) {
  auto nb = c.neighbors;
  std::sort(nb.begin(), nb.end(), [](const AgentState& a, const AgentState& b) {
    return a.payoff != b.payoff ? a.payoff < b.payoff : a.solution.bits() < b.solution.bits();
  });
  return nb;
}

// Marginal P(bit = 1) of an individual-learning candidate.
inline std::vector<double> individual_marginal(IndividualRule rule, const Solution& self) {
  const int n = self.size();
  std::vector<double> p(static_cast<std::size_t>(n));
  for (int d = 0; d < n; ++d) {
    const bool b = self[d];
    switch (rule) {
      case IndividualRule::None:
        p[static_cast<std::size_t>(d)] = b;
        break;
      case IndividualRule::SingleBitFlip:
      case IndividualRule::ProbabilisticFlip:  // both flip each bit with marginal probability 1/N
        p[static_cast<std::size_t>(d)] = b ? 1.0 - 1.0 / n : 1.0 / n;
        break;
      case IndividualRule::RandomResample:
        p[static_cast<std::size_t>(d)] = 0.5;
        break;
    }
  }
  return p;
}

}  // namespace detail

/// Always outputs the highest-payoff neighbor's solution (ties: the larger
/// solution encoding).
inline ProbePolicy copy_best_oracle() {
  return [](const ProbeCase& c) {
    const AgentState* best = &c.neighbors.front();
    for (const auto& s : c.neighbors)
      if (s.payoff > best->payoff || (s.payoff == best->payoff && s.solution.bits() > best->solution.bits())) best = &s;
    return detail::bits_of(best->solution);
  };
}

inline ProbePolicy uniform_oracle() {
  return [](const ProbeCase& c) { return std::vector<double>(static_cast<std::size_t>(c.self.solution.size()), 0.5); };
}

inline ProbePolicy always_self_oracle() {
  return [](const ProbeCase& c) { return detail::bits_of(c.self.solution); };
}

/// Exact per-bit marginal of the candidate a reference heuristic proposes:
/// its social option when that is strictly better than the current payoff,
/// otherwise its individual-learning candidate (or the current solution).
inline ProbePolicy analytic_oracle(const StrategySpec& spec) {
  return [spec](const ProbeCase& c) {
    const auto nb = detail::sorted_neighbors(c);
    const int n = c.self.solution.size();
    const auto indiv = detail::individual_marginal(spec.individual, c.self.solution);
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    // (probability, option) pairs of the social rule
    std::vector<std::pair<double, const AgentState*>> opts;
    switch (spec.social) {
      case SocialRule::PureIndividualist:
        break;
      case SocialRule::RandomImitator:
        for (const auto& s : nb) opts.push_back({1.0 / static_cast<double>(nb.size()), &s});
        break;
      case SocialRule::BestImitator: {
        double top = nb.back().payoff;
        std::vector<const AgentState*> ties;
        for (const auto& s : nb)
          if (s.payoff == top) ties.push_back(&s);
        for (auto* s : ties) opts.push_back({1.0 / static_cast<double>(ties.size()), s});
        break;
      }
      case SocialRule::Conformist: {
        std::vector<std::pair<int, const AgentState*>> counts;
        for (const auto& s : nb) {
          bool seen = false;
          for (auto& [cnt, rep] : counts)
            if (rep->solution == s.solution) ++cnt, seen = true;
          if (!seen) counts.push_back({1, &s});
        }
        int top = 0;
        for (const auto& [cnt, rep] : counts) top = std::max(top, cnt);
        int modes = 0;
        for (const auto& [cnt, rep] : counts) modes += cnt == top;
        if (counts.size() >= 2 && modes * top == static_cast<int>(nb.size())) break;  // no conformist option
        for (const auto& [cnt, rep] : counts)
          if (cnt == top) opts.push_back({1.0 / modes, rep});
        break;
      }
    }
    double fallback = opts.empty() ? 1.0 : 0.0;
    for (const auto& [w, s] : opts) {
      if (s->payoff > c.self.payoff) {
        for (int d = 0; d < n; ++d) out[static_cast<std::size_t>(d)] += w * s->solution[d];
      } else {
        fallback += w;
      }
    }
    for (int d = 0; d < n; ++d) out[static_cast<std::size_t>(d)] += fallback * indiv[static_cast<std::size_t>(d)];
    return out;
  };
}

/// Candidate the heuristic proposes in one draw (see analytic_oracle).
inline Solution strategy_candidate(const StrategySpec& spec, const AgentState& self,
                                   std::span<const AgentState> sample, Rng& rng) {
  if (auto s = social_option(spec, sample, rng); s && s->payoff > self.payoff) return s->solution;
  if (auto x = individual_option(spec.individual, self.solution, rng)) return *x;
  return self.solution;
}

/// Monte Carlo estimate of the same marginal from `draws` runs of the real
/// strategy code. Streams are keyed by the case's payoffs.
inline ProbePolicy sampled_oracle(const StrategySpec& spec, int draws, std::uint64_t seed) {
  if (draws < 1) throw std::invalid_argument("sampled_oracle: draws must be >= 1");
  return [spec, draws, seed](const ProbeCase& c) {
    const int n = c.self.solution.size();
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    std::uint64_t key = derive_seed(seed, Stream::kProbe, static_cast<std::uint64_t>(c.self.payoff));
    for (const auto& s : c.neighbors) key = derive_seed(key, static_cast<std::uint64_t>(s.payoff), s.solution.bits());
    Rng rng(key);
    for (int i = 0; i < draws; ++i) {
      const Solution x = strategy_candidate(spec, c.self, c.neighbors, rng);
      for (int d = 0; d < n; ++d) out[static_cast<std::size_t>(d)] += x[d];
    }
    for (double& v : out) v /= draws;
    return out;
  };
}

// --- distances and colors --------------------------------------------------

struct Distances {
  double self = 0.0, second = 0.0, best = 0.0;
};

inline double normalized_distance(std::span<const double> p, const Solution& x) {
  if (static_cast<int>(p.size()) != x.size()) throw std::invalid_argument("strategy_distances: length mismatch");
  double s = 0.0;
  for (int d = 0; d < x.size(); ++d) {
    const double e = p[static_cast<std::size_t>(d)] - x[d];
    s += e * e;
  }
  return std::sqrt(s / x.size());
}

inline Distances strategy_distances(std::span<const double> p, const TemplateSolutions& t) {
  return {normalized_distance(p, t.self), normalized_distance(p, t.second), normalized_distance(p, t.best)};
}

struct Color {
  double r = 0.0, g = 0.0, b = 0.0, a = 0.0;
};

inline Color voxel_color(const Distances& d) {
  const double m = std::min({d.self, d.second, d.best});
  return {1.0 - d.self, 1.0 - d.second, 1.0 - d.best, 0.3 * (1.0 - m) * (1.0 - m)};
}

// --- diagrams ----------------------------------------------------------------

struct OutputDiagram {
  TemplateKind kind = TemplateKind::kBI;
  int p0 = 0;
  std::vector<std::array<int, 3>> inputs;  // (p_1, p_2, p_3); p_3 = p_2 for CF
  std::vector<std::vector<double>> probs;  // one row per input
};

inline OutputDiagram output_diagram(const ProbePolicy& policy, TemplateKind kind, int p0, int n,
                                    const FeatureFlags& flags, int p_max = kProbePayoffMax) {
  const auto t = canonical_templates(n);
  OutputDiagram out;
  out.kind = kind;
  out.p0 = p0;
  if (kind == TemplateKind::kBI) {
    out.inputs = enumerate_bi_inputs(p0, p_max);
  } else {
    for (const auto& [p1, p2] : enumerate_cf_inputs(p0, p_max)) out.inputs.push_back({p1, p2, p2});
  }
  const auto& tpl = kind == TemplateKind::kBI ? t.bi : t.cf;
  out.probs.reserve(out.inputs.size());
  for (const auto& [p1, p2, p3] : out.inputs) out.probs.push_back(policy(make_probe_case(tpl, p0, p1, p2, p3, flags)));
  return out;
}

struct DiagramPoint {
  int p3 = 0, p2 = 0, p1 = 0;
  std::vector<double> probs;
  Distances dist;
  Color color;
};

/// BI-template voxels at coordinates that are multiples of `stride`.
inline std::vector<DiagramPoint> voxel_diagram(const ProbePolicy& policy, int p0, int n, const FeatureFlags& flags,
                                               int stride = 5, int p_max = kProbePayoffMax) {
  if (stride < 1) throw std::invalid_argument("voxel_diagram: stride must be >= 1");
  const auto t = canonical_templates(n).bi;
  std::vector<DiagramPoint> out;
  for (const auto& [p1, p2, p3] : enumerate_bi_inputs(p0, p_max)) {
    if (p1 % stride || p2 % stride || p3 % stride) continue;
    DiagramPoint pt;
    pt.p1 = p1, pt.p2 = p2, pt.p3 = p3;
    pt.probs = policy(make_probe_case(t, p0, p1, p2, p3, flags));
    pt.dist = strategy_distances(pt.probs, t);
    pt.color = voxel_color(pt.dist);
    out.push_back(std::move(pt));
  }
  return out;
}

struct RegionAverages {
  double I = 0.0, II = 0.0, III = 0.0, IV = 0.0;
};

/// Mean probability of producing 1 over the full (p_0, p_1) square with
/// p_2 = p_3 = 0, split by whether the self payoff is at least the best
/// neighbor's (I, II) or below it (III, IV), and by the best solution's bit
/// (0: I, III; 1: II, IV).
inline RegionAverages region_averages(const ProbePolicy& policy, int n, const FeatureFlags& flags,
                                      int p_max = kProbePayoffMax) {
  const auto t = region_template(n);
  std::array<double, 4> sum{};
  std::array<long, 4> cnt{};
  for (int p0 = 0; p0 <= p_max; ++p0)
    for (int p1 = 0; p1 <= p_max; ++p1) {
      const auto p = policy(make_probe_case(t, p0, p1, 0, 0, flags));
      const int base = p0 >= p1 ? 0 : 2;
      for (int d = 0; d < n; ++d) {
        const int r = base + (t.best[d] ? 1 : 0);
        sum[static_cast<std::size_t>(r)] += p[static_cast<std::size_t>(d)];
        ++cnt[static_cast<std::size_t>(r)];
      }
    }
  auto avg = [&](int r) { return sum[static_cast<std::size_t>(r)] / static_cast<double>(cnt[static_cast<std::size_t>(r)]); };
  return {avg(0), avg(1), avg(2), avg(3)};
}

// --- exports -----------------------------------------------------------------

inline constexpr int kProbeSchemaVersion = 1;
inline constexpr const char* kVoxelHeader = "p3,p2,p1,r,g,b,a";

inline std::string voxel_csv(const std::vector<DiagramPoint>& pts) {
  std::string s = std::string(kVoxelHeader) + '\n';
  for (const auto& p : pts)
    s += std::to_string(p.p3) + ',' + std::to_string(p.p2) + ',' + std::to_string(p.p1) + ',' + format_double(p.color.r) +
         ',' + format_double(p.color.g) + ',' + format_double(p.color.b) + ',' + format_double(p.color.a) + '\n';
  return s;
}

inline std::string diagram_csv(const OutputDiagram& d) {
  if (d.probs.empty()) throw std::invalid_argument("diagram_csv: empty diagram");
  std::string s = "p0,p1,p2,p3";
  for (std::size_t j = 0; j < d.probs.front().size(); ++j) s += ",x" + std::to_string(j);
  s += '\n';
  for (std::size_t i = 0; i < d.inputs.size(); ++i) {
    s += std::to_string(d.p0);
    for (int v : d.inputs[i]) s += ',' + std::to_string(v);
    for (double v : d.probs[i]) s += ',' + format_double(v);
    s += '\n';
  }
  return s;
}

inline nlohmann::json regions_json(const RegionAverages& r) {
  return {{"I", r.I}, {"II", r.II}, {"III", r.III}, {"IV", r.IV}};
}

namespace detail {

inline std::vector<std::vector<std::string>> parse_csv(const std::string& text, const std::string& expect_prefix) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind(expect_prefix, 0) != 0)
    throw std::runtime_error("csv: unexpected header, want '" + expect_prefix + "...'");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace detail

/// Reads back (p3, p2, p1, color) rows; probabilities and distances are not stored.
inline std::vector<DiagramPoint> read_voxel_csv(const std::string& text) {
  std::vector<DiagramPoint> out;
  for (const auto& c : detail::parse_csv(text, kVoxelHeader)) {
    if (c.size() != 7) throw std::runtime_error("voxel csv: expected 7 columns");
    DiagramPoint p;
    p.p3 = std::stoi(c[0]), p.p2 = std::stoi(c[1]), p.p1 = std::stoi(c[2]);
    p.color = {parse_double(c[3]), parse_double(c[4]), parse_double(c[5]), parse_double(c[6])};
    out.push_back(std::move(p));
  }
  return out;
}

inline OutputDiagram read_diagram_csv(const std::string& text, TemplateKind kind) {
  OutputDiagram d;
  d.kind = kind;
  for (const auto& c : detail::parse_csv(text, "p0,p1,p2,p3")) {
    if (c.size() < 5) throw std::runtime_error("diagram csv: too few columns");
    d.p0 = std::stoi(c[0]);
    d.inputs.push_back({std::stoi(c[1]), std::stoi(c[2]), std::stoi(c[3])});
    std::vector<double> row;
    for (std::size_t j = 4; j < c.size(); ++j) row.push_back(parse_double(c[j]));
    d.probs.push_back(std::move(row));
  }
  return d;
}

inline RegionAverages read_regions_json(const nlohmann::json& j) {
  return {j.at("I").get<double>(), j.at("II").get<double>(), j.at("III").get<double>(), j.at("IV").get<double>()};
}

}  // namespace sociallearn
