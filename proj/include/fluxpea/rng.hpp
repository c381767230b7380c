#pragma once

#include <cmath>
#include <cstdint>

namespace fluxpea {

namespace detail {

// SplitMix64 finalizer. Full 64-bit avalanche, which is what makes the
// counter-based construction below order-independent.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace detail

// Counter-based random stream keyed on (root seed, flux index j, repetition k).
// Identical keys reproduce the exact sequence; distinct keys give independent
// streams, so (j,k) tasks can run on any worker in any order.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint32_t flux_index, std::uint32_t repetition)
      : key_(derive_key(seed, flux_index, repetition)) {}

  std::uint64_t next_u64() {
    return detail::mix64(key_ ^ detail::mix64(counter_++));
  }

  // Uniform in (0,1); never returns 0 so log/Box-Muller are safe.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  std::uint64_t counter() const { return counter_; }

 private:
  static std::uint64_t derive_key(std::uint64_t seed, std::uint32_t j, std::uint32_t k) {
    std::uint64_t s = detail::mix64(seed);
    s = detail::mix64(s ^ (0x100000001ull * j + 1));
    s = detail::mix64(s ^ (0x200000003ull * k + 2));
    return s;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace fluxpea
