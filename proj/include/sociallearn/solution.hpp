#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sociallearn {

/// Binary solution vector of length N (N <= 64), packed into a bit mask.
/// Locus d is bit d of the mask, so bits() is also the binary-integer
/// encoding used for tie-breaking (locus 0 least significant).
class Solution {
 public:
  static constexpr int kMaxLoci = 64;

  Solution() = default;

  explicit Solution(int n_loci, std::uint64_t bits = 0) : n_(n_loci), bits_(bits & mask_for(n_loci)) {
    if (n_loci < 0 || n_loci > kMaxLoci) throw std::invalid_argument("Solution: n_loci out of range");
  }

  static Solution from_bits(std::span<const int> bits) {
    Solution s(static_cast<int>(bits.size()));
    for (std::size_t d = 0; d < bits.size(); ++d) {
      if (bits[d] != 0 && bits[d] != 1) throw std::invalid_argument("Solution: entries must be 0 or 1");
      if (bits[d]) s.bits_ |= std::uint64_t{1} << d;
    }
    return s;
  }

  static Solution from_bits(std::initializer_list<int> bits) {
    std::vector<int> v(bits);
    return from_bits(std::span<const int>(v));
  }

  /// Parses "0110..." with locus 0 first.
  static Solution from_string(const std::string& text) {
    Solution s(static_cast<int>(text.size()));
    for (std::size_t d = 0; d < text.size(); ++d) {
      if (text[d] == '1') {
        s.bits_ |= std::uint64_t{1} << d;
      } else if (text[d] != '0') {
        throw std::invalid_argument("Solution: expected only '0'/'1' characters");
      }
    }
    return s;
  }

  int size() const noexcept { return n_; }
  std::uint64_t bits() const noexcept { return bits_; }

  int operator[](int d) const noexcept { return static_cast<int>((bits_ >> d) & 1U); }

  void set(int d, int value) noexcept {
    const std::uint64_t m = std::uint64_t{1} << d;
    bits_ = value ? (bits_ | m) : (bits_ & ~m);
  }

  void flip(int d) noexcept { bits_ ^= std::uint64_t{1} << d; }

  int count_ones() const noexcept { return __builtin_popcountll(bits_); }

  int hamming(const Solution& other) const noexcept { return __builtin_popcountll(bits_ ^ other.bits_); }

  std::vector<int> to_vector() const {
    std::vector<int> v(static_cast<std::size_t>(n_));
    for (int d = 0; d < n_; ++d) v[static_cast<std::size_t>(d)] = (*this)[d];
    return v;
  }

  std::string to_string() const {
    std::string s(static_cast<std::size_t>(n_), '0');
    for (int d = 0; d < n_; ++d) s[static_cast<std::size_t>(d)] = (*this)[d] ? '1' : '0';
    return s;
  }

  friend bool operator==(const Solution&, const Solution&) = default;

  static constexpr std::uint64_t mask_for(int n_loci) noexcept {
    return n_loci >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << n_loci) - 1);
  }

 private:
  int n_ = 0;
  std::uint64_t bits_ = 0;
};

/// A solution together with its payoff on the current landscape.
struct AgentState {
  Solution solution;
  double payoff = 0.0;
};

}  // namespace sociallearn
