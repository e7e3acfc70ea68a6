#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sociallearn/solution.hpp"

namespace sociallearn {

/// Which per-row features accompany the solution bits.
struct FeatureFlags {
  bool include_payoff = true;
  bool include_self_indicator = true;
  bool include_ranking = true;
  bool include_frequency = true;

  static FeatureFlags pirf() { return {true, true, true, true}; }
  static FeatureFlags pir() { return {true, true, true, false}; }
  static FeatureFlags pi() { return {true, true, false, false}; }

  static FeatureFlags parse(const std::string& name) {
    if (name == "PIRF") return pirf();
    if (name == "PIR") return pir();
    if (name == "PI") return pi();
    throw std::invalid_argument("unknown feature preset '" + name + "' (expected PIRF, PIR or PI)");
  }

  std::string name() const {
    std::string s;
    if (include_payoff) s += 'P';
    if (include_self_indicator) s += 'I';
    if (include_ranking) s += 'R';
    if (include_frequency) s += 'F';
    return s;
  }

  /// Extra columns besides the solution bits and payoff.
  int extra() const { return int{include_self_indicator} + int{include_ranking} + int{include_frequency}; }

  friend bool operator==(const FeatureFlags&, const FeatureFlags&) = default;
};

/// Column layout of an observation row: bits, then the enabled features in
/// the order payoff, self indicator, rank, frequency. Disabled features have
/// index -1.
struct FeatureLayout {
  int n_loci = 0;
  int width = 0;
  int payoff = -1;
  int indicator = -1;
  int rank = -1;
  int frequency = -1;

  FeatureLayout() = default;
  FeatureLayout(int n, const FeatureFlags& f) : n_loci(n), width(n) {
    if (f.include_payoff) payoff = width++;
    if (f.include_self_indicator) indicator = width++;
    if (f.include_ranking) rank = width++;
    if (f.include_frequency) frequency = width++;
  }
};

/// (S+1) rows of per-agent features, row-major. Row order carries no
/// meaning: the self row is marked only by the indicator column.
struct ObservationMatrix {
  int rows = 0;
  int cols = 0;
  FeatureLayout layout;
  std::vector<double> data;

  std::span<const double> row(int r) const {
    return {data.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols), static_cast<std::size_t>(cols)};
  }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; }

  friend bool operator==(const ObservationMatrix& a, const ObservationMatrix& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
  }
};

/// Encodes self (row 0) and S neighbors (rows 1..S).
///
/// - payoff column: payoff / 100
/// - rank column: competition ("1224") rank over all S+1 payoffs, mapped to
///   (rank - 1) / S so the best row is 0 and the worst possible is 1
/// - frequency column: number of neighbor rows holding exactly this row's
///   solution, divided by S; the self row is never counted
inline ObservationMatrix build_observation(const AgentState& self, std::span<const AgentState> neighbors,
                                           const FeatureFlags& flags) {
  if (neighbors.empty()) throw std::invalid_argument("build_observation: need at least one neighbor");
  const int n = self.solution.size();
  const int s = static_cast<int>(neighbors.size());
  ObservationMatrix obs;
  obs.layout = FeatureLayout(n, flags);
  obs.rows = s + 1;
  obs.cols = obs.layout.width;
  obs.data.assign(static_cast<std::size_t>(obs.rows) * static_cast<std::size_t>(obs.cols), 0.0);

  auto state = [&](int r) -> const AgentState& { return r == 0 ? self : neighbors[static_cast<std::size_t>(r - 1)]; };
  for (int r = 0; r < obs.rows; ++r) {
    const AgentState& st = state(r);
    if (st.solution.size() != n) throw std::invalid_argument("build_observation: solution lengths differ");
    double* out = obs.data.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(obs.cols);
    for (int d = 0; d < n; ++d) out[d] = st.solution[d];
    const FeatureLayout& L = obs.layout;
    if (L.payoff >= 0) out[L.payoff] = st.payoff / 100.0;
    if (L.indicator >= 0) out[L.indicator] = r == 0 ? 1.0 : 0.0;
    if (L.rank >= 0) {
      int better = 0;
      for (int q = 0; q < obs.rows; ++q) better += state(q).payoff > st.payoff ? 1 : 0;
      out[L.rank] = static_cast<double>(better) / s;  // (rank - 1) / S
    }
    if (L.frequency >= 0) {
      int same = 0;
      for (int q = 1; q < obs.rows; ++q) same += state(q).solution == st.solution ? 1 : 0;
      out[L.frequency] = static_cast<double>(same) / s;
    }
  }
  return obs;
}

}  // namespace sociallearn
