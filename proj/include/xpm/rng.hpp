#pragma once

#include <array>
#include <cstdint>

namespace xpm {

/// Philox4x32-10 block function (Salmon et al., Random123). Maps a 128-bit
/// counter and 64-bit key to 128 pseudo-random bits; portable and stateless.
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;
PhiloxCounter philox4x32_10(PhiloxCounter counter, PhiloxKey key) noexcept;

/// Stream generator on top of Philox: the key is the seed, the upper counter
/// words carry a stream id, the lower words a block index. Distinct
/// (seed, stream) pairs give independent, reproducible sequences, so work
/// item `r` can always draw from stream `r` regardless of scheduling.
///
/// Distribution transforms (uniform, Box-Muller normal, Lemire bounded ints)
/// are implemented here rather than via <random> distributions, whose output
/// is implementation-defined.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

  std::uint32_t next_u32() noexcept;
  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform in (0, 1).
  double uniform_open() noexcept;
  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_index(std::uint64_t bound) noexcept;
  double normal() noexcept;
  double exponential() noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  void refill() noexcept;

  PhiloxKey key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  PhiloxCounter buffer_{};
  int used_ = 4;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

/// Mixes two 64-bit values into a derived seed (splitmix64 finaliser);
/// used to give nested simulations their own seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) noexcept;

}  // namespace xpm
