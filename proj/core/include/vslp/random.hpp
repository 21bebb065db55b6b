#pragma once

#include <cstdint>

namespace vslp {

/// Stateless counter-based generator: every draw is a pure function of
/// (seed, stream, counter), so chains are reproducible regardless of the
/// order or thread in which draws happen.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  std::uint64_t bits(std::uint64_t counter) const;
  /// Uniform on the open interval (0, 1).
  double uniform(std::uint64_t counter) const;
  /// Standard normal via Box-Muller on two derived uniforms.
  double normal(std::uint64_t counter) const;

  CounterRng substream(std::uint64_t stream) const;
  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

/// splitmix64 finaliser.
std::uint64_t mix64(std::uint64_t x);

}  // namespace vslp
