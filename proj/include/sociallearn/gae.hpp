#pragma once

#include <span>
#include <stdexcept>
#include <vector>

namespace sociallearn {

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantage + value: the critic's regression target
};

/// Generalized advantage estimation over one finished trajectory. The value
/// after the last step is taken as 0.
inline GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, double gamma,
                             double lambda) {
  if (rewards.size() != values.size()) throw std::invalid_argument("compute_gae: rewards and values differ in length");
  const std::size_t T = rewards.size();
  GaeResult out;
  out.advantages.resize(T);
  out.returns.resize(T);
  double running = 0.0;
  for (std::size_t t = T; t-- > 0;) {
    const double next = t + 1 < T ? values[t + 1] : 0.0;
    const double delta = rewards[t] + gamma * next - values[t];
    running = delta + gamma * lambda * running;
    out.advantages[t] = running;
    out.returns[t] = running + values[t];
  }
  return out;
}

}  // namespace sociallearn
