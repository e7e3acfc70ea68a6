#pragma once

#include <cstdint>
#include <limits>

namespace sociallearn {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives a stream key from a parent seed and any number of integer
/// counters, e.g. derive_seed(master, agent, step). Distinct counter tuples
/// give statistically independent keys.
template <typename... Counters>
constexpr std::uint64_t derive_seed(std::uint64_t seed, Counters... counters) noexcept {
  std::uint64_t key = mix64(seed ^ 0x2545f4914f6cdd1dULL);
  ((key = mix64(key ^ mix64(static_cast<std::uint64_t>(counters) + 0x632be59bd9b4e019ULL))), ...);
  return key;
}

// Stream tags keep derived keys for different purposes apart.
enum class Stream : std::uint64_t {
  kLandscape = 1,
  kInit,
  kAgentStep,
  kEpisode,
  kBatchLandscape,
  kTraining,
  kMinibatch,
  kInitParams,
  kTopology,
  kProbe,
};

/// SplitMix64 generator keyed by a derived seed. Cheap to construct, so a
/// fresh stream per (episode, agent, step) costs nothing.
///
/// Integer and real draws are implemented here rather than through
/// <random> distributions so results are identical across standard
/// libraries.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr Rng(std::uint64_t key) noexcept : state_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform real in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), n > 0 (Lemire's nearly-divisionless method).
  std::uint64_t below(std::uint64_t n) noexcept {
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  std::uint64_t state_;
};

}  // namespace sociallearn
