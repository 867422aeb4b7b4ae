#pragma once

#include <cstdint>

namespace fednmap {

/// Counter-based deterministic RNG stream.
///
/// A stream is addressed by (seed, lane) where the lane is up to three
/// indices; the simulator uses (client, round, local step). Identical
/// addresses always reproduce identical draws, and distinct lanes are
/// decorrelated by a splitmix64-style hash of the address, so streams can
/// be created on any worker thread without shared state.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t lane_a = 0,
                     std::uint64_t lane_b = 0, std::uint64_t lane_c = 0);

  std::uint64_t next_u64();

  /// Uniform draw in [0, 1) with 53 random bits.
  double next_double();

  /// Standard normal via Box-Muller; the paired draw is cached.
  double next_gaussian();

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t next_below(std::uint64_t n);

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// splitmix64 finalizer; also used to derive lane keys elsewhere.
std::uint64_t mix64(std::uint64_t z);

}  // namespace fednmap
