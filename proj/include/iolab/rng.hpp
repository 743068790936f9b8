#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace iolab {

// Seeded generator with platform-independent derived draws.
//
// std::mt19937_64 is bit-exact across standard libraries; the distribution
// adaptors are not, so every derived draw used by this project goes through
// the members below.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform integer in [0, bound) by rejection of the biased low range.
  std::uint64_t below(std::uint64_t bound);

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Fisher-Yates, walking i from size-1 down to 1 and swapping with below(i+1).
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Mixes a seed with a stream tag so that independent streams never share state.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace iolab
