#pragma once

#include <cstdint>
#include <string_view>

namespace gptight {

/// Counter-based random stream: draw k is a pure function of (seed, k).
///
/// Two streams with equal (seed, counter) produce identical draws. Separate
/// consumers (plant noise, exploration draws, ...) should use split() so
/// their sequences do not interleave.
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(std::uint64_t seed, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller (two draws per call, no cached state).
  double normal();

  /// Independent child stream keyed by a tag.
  RngStream split(std::uint64_t tag) const;
  RngStream split(std::string_view tag) const;

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace gptight
