#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sociallearn/rng.hpp"
#include "sociallearn/solution.hpp"

namespace sociallearn {

/// Tunably rugged NK payoff landscape over binary solutions.
///
/// Locus i contributes tables[i][pattern], where pattern reads the K bits
/// listed in deps[i] (deps[i][0] == i, the locus itself) as an unsigned
/// integer with the first listed locus as the most significant bit. The raw
/// payoff is the mean contribution; the reported payoff is
/// 100 * (raw / max_raw)^8, so the global optimum always scores exactly 100.
///
/// Landscapes are immutable after construction and safe to share between
/// threads.
class NKLandscape {
 public:
  static constexpr int kDefaultEnumerationCap = 25;
  static constexpr int kExponent = 8;
  static constexpr double kScale = 100.0;
  // Dense payoff cache is kept for N up to this size (8 MiB of doubles).
  static constexpr int kCacheCap = 20;

  /// Draws a landscape: each locus depends on itself plus K-1 distinct other
  /// loci chosen uniformly without replacement, and every table entry is iid
  /// Uniform[0,1). Deterministic in (n_loci, k_inputs, seed).
  static NKLandscape generate(int n_loci, int k_inputs, std::uint64_t seed,
                              int enumeration_cap = kDefaultEnumerationCap) {
    check_shape(n_loci, k_inputs, enumeration_cap);
    Rng rng(derive_seed(seed, Stream::kLandscape, n_loci, k_inputs));
    std::vector<std::vector<int>> deps(static_cast<std::size_t>(n_loci));
    std::vector<std::vector<double>> tables(static_cast<std::size_t>(n_loci));
    std::vector<int> others;
    for (int i = 0; i < n_loci; ++i) {
      others.clear();
      for (int j = 0; j < n_loci; ++j)
        if (j != i) others.push_back(j);
      auto& d = deps[static_cast<std::size_t>(i)];
      d.push_back(i);
      // Partial Fisher-Yates: the first K-1 slots become a uniform draw
      // without replacement.
      for (int m = 0; m < k_inputs - 1; ++m) {
        const auto pick = m + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_loci - 1 - m)));
        std::swap(others[static_cast<std::size_t>(m)], others[static_cast<std::size_t>(pick)]);
        d.push_back(others[static_cast<std::size_t>(m)]);
      }
      auto& t = tables[static_cast<std::size_t>(i)];
      t.resize(std::size_t{1} << k_inputs);
      for (auto& v : t) v = rng.uniform();
    }
    return NKLandscape(n_loci, k_inputs, seed, std::move(deps), std::move(tables), enumeration_cap);
  }

  /// Builds a landscape from explicit dependencies and tables (validated).
  static NKLandscape from_parts(int n_loci, int k_inputs, std::vector<std::vector<int>> deps,
                                std::vector<std::vector<double>> tables, std::uint64_t seed = 0,
                                int enumeration_cap = kDefaultEnumerationCap) {
    check_shape(n_loci, k_inputs, enumeration_cap);
    return NKLandscape(n_loci, k_inputs, seed, std::move(deps), std::move(tables), enumeration_cap);
  }

  int n_loci() const noexcept { return n_; }
  int k_inputs() const noexcept { return k_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<std::vector<int>>& deps() const noexcept { return deps_; }
  const std::vector<std::vector<double>>& tables() const noexcept { return tables_; }
  double p_max_raw() const noexcept { return p_max_raw_; }

  /// Mean of the N table contributions, in [0, 1).
  double raw_payoff(const Solution& x) const {
    check_dims(x);
    return raw_payoff_bits(x.bits());
  }

  /// 100 * (raw / p_max_raw)^8, in [0, 100].
  double payoff(const Solution& x) const {
    check_dims(x);
    if (!payoff_cache_.empty()) return payoff_cache_[x.bits()];
    return transform(raw_payoff_bits(x.bits()));
  }

  /// Raw payoff mapped through the normalization; strictly increasing in raw.
  double transform(double raw) const noexcept {
    const double r = raw / p_max_raw_;
    const double r2 = r * r;
    const double r4 = r2 * r2;
    return kScale * (r4 * r4);
  }

  /// Optimal solution and its raw payoff. Ties go to the lowest encoding.
  std::pair<Solution, double> global_argmax() const { return {Solution(n_, argmax_bits_), p_max_raw_}; }

  friend bool operator==(const NKLandscape& a, const NKLandscape& b) {
    return a.n_ == b.n_ && a.k_ == b.k_ && a.seed_ == b.seed_ && a.deps_ == b.deps_ && a.tables_ == b.tables_ &&
           a.p_max_raw_ == b.p_max_raw_;
  }

  nlohmann::json to_json() const {
    return {{"format", "sociallearn.landscape"}, {"version", 1}, {"n_loci", n_},  {"k_inputs", k_},
            {"seed", seed_},                     {"deps", deps_}, {"tables", tables_}, {"p_max_raw", p_max_raw_}};
  }

  static NKLandscape from_json(const nlohmann::json& j, int enumeration_cap = kDefaultEnumerationCap) {
    if (j.value("format", "") != "sociallearn.landscape" || j.value("version", 0) != 1)
      throw std::runtime_error("landscape: unsupported file format or version");
    auto land = from_parts(j.at("n_loci").get<int>(), j.at("k_inputs").get<int>(),
                           j.at("deps").get<std::vector<std::vector<int>>>(),
                           j.at("tables").get<std::vector<std::vector<double>>>(), j.at("seed").get<std::uint64_t>(),
                           enumeration_cap);
    if (land.p_max_raw_ != j.at("p_max_raw").get<double>())
      throw std::runtime_error("landscape: stored p_max_raw does not match the tables");
    return land;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("landscape: cannot write " + path);
    out << to_json().dump(1) << '\n';
  }

  static NKLandscape load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("landscape: cannot read " + path);
    return from_json(nlohmann::json::parse(in));
  }

 private:
  NKLandscape(int n, int k, std::uint64_t seed, std::vector<std::vector<int>> deps,
              std::vector<std::vector<double>> tables, int enumeration_cap)
      : n_(n), k_(k), seed_(seed), deps_(std::move(deps)), tables_(std::move(tables)) {
    validate_parts();
    if (n_ > enumeration_cap) throw std::invalid_argument("NKLandscape: N exceeds the enumeration cap");
    normalize();
  }

  static void check_shape(int n, int k, int cap) {
    if (n < 1 || n > Solution::kMaxLoci) throw std::invalid_argument("NKLandscape: N must be in [1, 64]");
    if (k < 1 || k > n) throw std::invalid_argument("NKLandscape: K must satisfy 1 <= K <= N");
    if (n > cap) throw std::invalid_argument("NKLandscape: N exceeds the enumeration cap");
  }

  void check_dims(const Solution& x) const {
    if (x.size() != n_) throw std::invalid_argument("NKLandscape: solution length does not match N");
  }

  void validate_parts() const {
    if (deps_.size() != static_cast<std::size_t>(n_) || tables_.size() != static_cast<std::size_t>(n_))
      throw std::invalid_argument("NKLandscape: need one dependency list and table per locus");
    for (int i = 0; i < n_; ++i) {
      const auto& d = deps_[static_cast<std::size_t>(i)];
      if (d.size() != static_cast<std::size_t>(k_) || d[0] != i)
        throw std::invalid_argument("NKLandscape: deps[i] must list K loci starting with i");
      for (std::size_t a = 0; a < d.size(); ++a) {
        if (d[a] < 0 || d[a] >= n_) throw std::invalid_argument("NKLandscape: dependency index out of range");
        for (std::size_t b = a + 1; b < d.size(); ++b)
          if (d[a] == d[b]) throw std::invalid_argument("NKLandscape: dependencies must be distinct");
      }
      const auto& t = tables_[static_cast<std::size_t>(i)];
      if (t.size() != (std::size_t{1} << k_)) throw std::invalid_argument("NKLandscape: table must have 2^K entries");
      for (double v : t)
        if (!(v >= 0.0 && v < 1.0)) throw std::invalid_argument("NKLandscape: table entries must be in [0,1)");
    }
  }

  double raw_payoff_bits(std::uint64_t bits) const noexcept {
    double sum = 0.0;
    for (int i = 0; i < n_; ++i) {
      const auto& d = deps_[static_cast<std::size_t>(i)];
      std::size_t pattern = 0;
      for (int m = 0; m < k_; ++m) pattern = (pattern << 1) | ((bits >> d[static_cast<std::size_t>(m)]) & 1U);
      sum += tables_[static_cast<std::size_t>(i)][pattern];
    }
    return sum / n_;
  }

  void normalize() {
    const std::uint64_t count = std::uint64_t{1} << n_;
    const bool cache = n_ <= kCacheCap;
    if (cache) payoff_cache_.resize(count);
    p_max_raw_ = -1.0;
    for (std::uint64_t b = 0; b < count; ++b) {
      const double raw = raw_payoff_bits(b);
      if (cache) payoff_cache_[b] = raw;
      if (raw > p_max_raw_) {
        p_max_raw_ = raw;
        argmax_bits_ = b;
      }
    }
    if (!(p_max_raw_ > 0.0)) throw std::invalid_argument("NKLandscape: maximum raw payoff must be positive");
    for (auto& v : payoff_cache_) v = transform(v);
  }

  int n_ = 0;
  int k_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<std::vector<int>> deps_;
  std::vector<std::vector<double>> tables_;
  double p_max_raw_ = 0.0;
  std::uint64_t argmax_bits_ = 0;
  std::vector<double> payoff_cache_;
};

}  // namespace sociallearn
