#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

namespace blockbp {

// Deterministic 64-bit generator (splitmix64). std::mt19937 plus the standard
// distributions would not give bit-identical streams across standard library
// implementations, so all randomness in this project flows through this type.
class rng {
 public:
  explicit rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Unbiased integer in [0, bound). bound must be nonzero.
  std::uint64_t next_below(std::uint64_t bound) {
    // Lemire's multiply-shift with rejection.
    std::uint64_t x = next_u64();
    unsigned __int128 m = static_cast<unsigned __int128>(x) * bound;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < bound) {
      std::uint64_t threshold = (0 - bound) % bound;
      while (lo < threshold) {
        x = next_u64();
        m = static_cast<unsigned __int128>(x) * bound;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; generates pairs, caches the second.
  double next_normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = next_double();
    while (u1 == 0.0) u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  /// k distinct values from [0, n), ascending. Partial Fisher-Yates on a
  /// sparse view of [0, n), so cost is O(k) memory regardless of n.
  std::vector<std::uint32_t> sample_without_replacement(std::uint64_t n,
                                                        std::uint64_t k);

 private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

/// Derives an independent stream seed from (master, stream index).
/// Fixed mixing rule so sharded work is independent of worker count.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b) {
  return derive_seed(derive_seed(master, a), b);
}

inline std::vector<std::uint32_t> rng::sample_without_replacement(
    std::uint64_t n, std::uint64_t k) {
  // Swap map holds only displaced entries of the virtual array [0, n).
  std::vector<std::uint32_t> out;
  out.reserve(k);
  std::vector<std::pair<std::uint64_t, std::uint32_t>> swaps;
  auto lookup = [&](std::uint64_t i) -> std::uint32_t {
    for (const auto& [pos, val] : swaps)
      if (pos == i) return val;
    return static_cast<std::uint32_t>(i);
  };
  for (std::uint64_t i = 0; i < k; ++i) {
    const std::uint64_t j = i + next_below(n - i);
    const std::uint32_t vj = lookup(j);
    const std::uint32_t vi = lookup(i);
    out.push_back(vj);
    bool replaced = false;
    for (auto& [pos, val] : swaps)
      if (pos == j) {
        val = vi;
        replaced = true;
        break;
      }
    if (!replaced) swaps.emplace_back(j, vi);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace blockbp
