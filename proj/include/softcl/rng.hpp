#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace softcl {

/// Seeded pseudo-random source used for every sampling decision in the
/// library (splits, batch order, initialization, synthetic data).
///
/// The engine is std::mt19937_64 (its constants are fixed by the C++
/// standard). The distributions are implemented here rather than taken from
/// <random>, because the standard leaves the algorithms behind
/// std::uniform_int_distribution and std::normal_distribution to the
/// implementation. With these, a seed produces the same stream on every
/// conforming toolchain:
///
///   uniform_index(n)  rejection sampling on the raw 64-bit output
///   uniform01()       top 53 bits scaled by 2^-53, in [0, 1)
///   normal()          Box-Muller, cosine branch only, one draw per call
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);

  double uniform01();

  double normal();

  /// Fisher-Yates shuffle driven by uniform_index, back to front.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Engine state as text (the standard operator<< representation).
  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

/// 64-bit FNV-1a. Stable across platforms; used for config hashes and for
/// deriving per-sentence seeds.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace softcl
