#pragma once
// Seeded random source for scenario generation.
//
// Engine: std::mt19937_64 seeded directly with the 64-bit scenario seed. The
// engine's output sequence is fixed by the C++ standard, but the standard
// distributions and std::shuffle are not, so every mapping from raw 64-bit
// draws to values is defined here. Changing any of these functions changes
// what "same seed" means and must bump kRngAlgorithm.

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace mcisim {

inline constexpr const char* kRngAlgorithm = "mt19937_64/reject-mod/53bit-unit/fisher-yates-v1";

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform integer in [0, n); n > 0. Rejects the biased tail.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % n;
  }

  // Uniform double in [0, 1) from the top 53 bits.
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  // Fisher-Yates, walking from the back.
  template <typename T, std::size_t N>
  void shuffle(std::span<T, N> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mcisim
