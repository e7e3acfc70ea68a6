#pragma once

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sociallearn/nk_landscape.hpp"
#include "sociallearn/rng.hpp"
#include "sociallearn/solution.hpp"

namespace sociallearn {

enum class SocialRule { BestImitator, Conformist, RandomImitator, PureIndividualist };
enum class IndividualRule { None, SingleBitFlip, ProbabilisticFlip, RandomResample };

/// A reference heuristic: a social option rule composed with an individual
/// learning variant, e.g. "BI-R" or "CF-I". Pure "PI" is rejected.
struct StrategySpec {
  SocialRule social = SocialRule::BestImitator;
  IndividualRule individual = IndividualRule::None;

  StrategySpec() = default;
  StrategySpec(SocialRule s, IndividualRule i) : social(s), individual(i) {
    if (s == SocialRule::PureIndividualist && i == IndividualRule::None)
      throw std::invalid_argument("StrategySpec: pure individualist needs an individual learning variant");
  }

  static StrategySpec parse(const std::string& name) {
    const auto dash = name.find('-');
    const std::string head = name.substr(0, dash);
    SocialRule s;
    if (head == "BI") {
      s = SocialRule::BestImitator;
    } else if (head == "CF") {
      s = SocialRule::Conformist;
    } else if (head == "RI") {
      s = SocialRule::RandomImitator;
    } else if (head == "PI") {
      s = SocialRule::PureIndividualist;
    } else {
      throw std::invalid_argument("unknown strategy: " + name);
    }
    IndividualRule i = IndividualRule::None;
    if (dash != std::string::npos) {
      const std::string tail = name.substr(dash + 1);
      if (tail == "I") {
        i = IndividualRule::SingleBitFlip;
      } else if (tail == "P") {
        i = IndividualRule::ProbabilisticFlip;
      } else if (tail == "R") {
        i = IndividualRule::RandomResample;
      } else {
        throw std::invalid_argument("unknown strategy: " + name);
      }
    }
    return {s, i};
  }

  std::string name() const {
    static constexpr std::array<const char*, 4> heads{"BI", "CF", "RI", "PI"};
    static constexpr std::array<const char*, 4> tails{"", "-I", "-P", "-R"};
    return std::string(heads[static_cast<std::size_t>(social)]) + tails[static_cast<std::size_t>(individual)];
  }

  friend bool operator==(const StrategySpec&, const StrategySpec&) = default;
};

/// The twelve reference baselines, in the conventional reporting order.
inline std::vector<StrategySpec> reference_baselines() {
  std::vector<StrategySpec> out;
  for (const char* n : {"BI", "BI-I", "BI-P", "BI-R", "CF", "CF-I", "CF-P", "CF-R", "PI-I", "PI-P", "PI-R", "RI"})
    out.push_back(StrategySpec::parse(n));
  return out;
}

/// Candidate from social learning, or nullopt when the rule offers none
/// (pure individualists; conformists facing all-distinct solutions).
/// The returned state carries the neighbor's payoff.
inline std::optional<AgentState> social_option(const StrategySpec& spec, std::span<const AgentState> sample,
                                               Rng& rng) {
  if (sample.empty()) throw std::invalid_argument("social_option: empty neighbor sample");
  const std::size_t s = sample.size();
  switch (spec.social) {
    case SocialRule::PureIndividualist:
      return std::nullopt;
    case SocialRule::RandomImitator:
      return sample[rng.below(s)];
    case SocialRule::BestImitator: {
      double best = sample[0].payoff;
      std::size_t ties = 1;
      std::size_t chosen = 0;
      // Reservoir choice keeps ties uniform in one pass.
      for (std::size_t i = 1; i < s; ++i) {
        if (sample[i].payoff > best) {
          best = sample[i].payoff;
          ties = 1;
          chosen = i;
        } else if (sample[i].payoff == best && rng.below(++ties) == 0) {
          chosen = i;
        }
      }
      return sample[chosen];
    }
    case SocialRule::Conformist: {
      std::size_t top = 0;
      std::size_t modes = 0;
      std::size_t distinct = 0;
      std::size_t chosen = 0;
      for (std::size_t i = 0; i < s; ++i) {
        std::size_t count = 0;
        bool first = true;
        for (std::size_t j = 0; j < s; ++j) {
          if (sample[j].solution == sample[i].solution) {
            ++count;
            if (j < i) first = false;
          }
        }
        if (!first) continue;  // count each distinct solution once
        ++distinct;
        if (count > top) {
          top = count;
          modes = 1;
          chosen = i;
        } else if (count == top && rng.below(++modes) == 0) {
          chosen = i;
        }
      }
      // Two or more solutions, all equally frequent: no conformist option.
      // A unanimous sample still has a majority to follow.
      if (distinct >= 2 && modes * top == s) return std::nullopt;
      return sample[chosen];
    }
  }
  return std::nullopt;
}

/// Candidate from asocial learning, or nullopt for IndividualRule::None.
inline std::optional<Solution> individual_option(IndividualRule variant, const Solution& current, Rng& rng) {
  const int n = current.size();
  switch (variant) {
    case IndividualRule::None:
      return std::nullopt;
    case IndividualRule::SingleBitFlip: {
      Solution next = current;
      next.flip(static_cast<int>(rng.below(static_cast<std::uint64_t>(n))));
      return next;
    }
    case IndividualRule::ProbabilisticFlip: {
      Solution next = current;
      const double p = 1.0 / n;
      for (int d = 0; d < n; ++d)
        if (rng.bernoulli(p)) next.flip(d);
      return next;
    }
    case IndividualRule::RandomResample:
      return Solution(n, rng());
  }
  return std::nullopt;
}

/// One adopt-if-better update: take the social option if it strictly beats
/// the current payoff, otherwise try the individual option under the same
/// rule, otherwise keep the current state.
inline AgentState strategy_step(const StrategySpec& spec, const AgentState& self, std::span<const AgentState> sample,
                                const NKLandscape& landscape, Rng& rng) {
  if (self.solution.size() != landscape.n_loci())
    throw std::invalid_argument("strategy_step: solution length does not match the landscape");
  if (auto social = social_option(spec, sample, rng); social && social->payoff > self.payoff) return *social;
  if (auto candidate = individual_option(spec.individual, self.solution, rng)) {
    const double p = landscape.payoff(*candidate);
    if (p > self.payoff) return {*candidate, p};
  }
  return self;
}

}  // namespace sociallearn
