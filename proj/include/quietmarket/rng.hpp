#pragma once

// Counter-based random numbers: every draw is a pure function of
// (key, counter), so results do not depend on iteration order or threading.

#include <cstdint>

namespace quietmarket {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

class CounterRng {
 public:
  constexpr explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

  constexpr std::uint64_t key() const noexcept { return key_; }

  constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
    return splitmix64(key_ ^ splitmix64(counter));
  }

  /// Uniform double in [0, 1) with 53 random bits.
  constexpr double uniform(std::uint64_t counter) const noexcept {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  constexpr double uniform(std::uint64_t counter, double lo, double hi) const noexcept {
    return lo + (hi - lo) * uniform(counter);
  }

  /// Independent sub-stream, e.g. one per benchmark instance.
  constexpr CounterRng derive(std::uint64_t stream) const noexcept {
    return CounterRng(splitmix64(key_ + 0x632BE59BD9B4E019ull * (stream + 1)));
  }

 private:
  std::uint64_t key_;
};

}  // namespace quietmarket
