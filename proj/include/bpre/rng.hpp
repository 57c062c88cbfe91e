#pragma once

// Counter-based random streams.
//
// Every stream is Philox4x32-10 (Salmon et al., "Parallel random numbers:
// as easy as 1, 2, 3", SC'11) keyed by the 64-bit master seed. The 128-bit
// counter is split into a 64-bit block index (words 0,1) and a 64-bit stream
// index (words 2,3), so trial t of a run always reads the same numbers no
// matter which worker executes it.
//
// Derived variates are defined here rather than taken from <random> so the
// exact sequence can be replayed by any implementation:
//   uniform()  : (hi32 << 21 ^ lo32 >> 11) -> 53-bit integer u, returns (u + 0.5) / 2^53
//   normal()   : Box-Muller cosine branch, one normal per two uniforms

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace bpre {

inline constexpr std::string_view kRngId = "philox4x32-10";

using PhiloxBlock = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

// The raw Philox4x32 bijection with 10 rounds.
constexpr PhiloxBlock philox4x32_10(PhiloxBlock ctr, PhiloxKey key) {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kW0;
      key[1] += kW1;
    }
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

// One independent stream: (seed, stream) -> infinite sequence of 32-bit words.
// Satisfies UniformRandomBitGenerator.
class RandomStream {
 public:
  using result_type = std::uint32_t;

  explicit RandomStream(std::uint64_t seed, std::uint64_t stream = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return 0xFFFFFFFFu; }

  result_type operator()() {
    if (used_ == 4) refill();
    return buffer_[used_++];
  }

  // Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() {
    const std::uint64_t hi = (*this)();
    const std::uint64_t lo = (*this)();
    const std::uint64_t bits = (hi << 21) ^ (lo >> 11);
    return (static_cast<double>(bits & ((std::uint64_t{1} << 53) - 1)) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t seed() const { return key_[0] | (static_cast<std::uint64_t>(key_[1]) << 32); }
  std::uint64_t stream() const { return stream_; }

 private:
  void refill() {
    const PhiloxBlock ctr{static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                          static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    buffer_ = philox4x32_10(ctr, key_);
    ++block_;
    used_ = 0;
  }

  PhiloxKey key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  PhiloxBlock buffer_{};
  int used_ = 4;
};

// Stream for trial `trial` of a run started from `master_seed`.
inline RandomStream trial_stream(std::uint64_t master_seed, std::uint64_t trial) {
  return RandomStream(master_seed, trial);
}

}  // namespace bpre
