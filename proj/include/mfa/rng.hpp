#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace mfa {

/// Philox4x32-10 block function (Salmon et al., SC'11): maps a 128-bit
/// counter and a 64-bit key to 128 pseudo-random bits.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// SplitMix64 finalizer, used to derive keys from (seed, replication).
std::uint64_t mix64(std::uint64_t x);

/// What a stream is used for. Each purpose owns a disjoint counter range.
enum class StreamPurpose : std::uint32_t {
  kPermutation = 1,
  kArrival = 2,
  kRegeneration = 3,
  kTieBreak = 4,
  kInitialState = 5,
  kOpponentBids = 6,
  kPairSelection = 7,
};

/// Sequential view of one Philox substream.
///
/// The stream is identified by (key, purpose, entity, slot); draws advance a
/// private block index, so two streams never share counters and results do
/// not depend on the order in which streams are consumed.
class RandomStream {
 public:
  RandomStream(std::uint64_t key, StreamPurpose purpose, std::uint32_t entity,
               std::uint32_t slot);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n); n must be positive.
  std::size_t below(std::size_t n);

 private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> block_{};
  unsigned used_ = 4;
};

/// Factory for streams under one run seed (optionally a replication index).
class StreamFactory {
 public:
  explicit StreamFactory(std::uint64_t seed, std::uint64_t replication = 0)
      : key_(mix64(seed ^ mix64(replication + 0x9E3779B97F4A7C15ULL))) {}

  RandomStream stream(StreamPurpose purpose, std::uint32_t entity, std::uint32_t slot) const {
    return RandomStream(key_, purpose, entity, slot);
  }
  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
};

}  // namespace mfa
