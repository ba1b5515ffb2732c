#pragma once

#include <cstdint>
#include <string_view>

namespace objcrop {

/// Deterministic pseudo-random generator: xoshiro256++ with splitmix64 seed
/// expansion. The stream depends only on the seed, never on the platform or
/// standard library, so every experiment is replayable from its config.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 bits of precision.
  double uniform01();

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);

  /// Uniform integer in [lo, hi], both inclusive. Unbiased (rejection based).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Standard normal via Box-Muller (two uniform draws per value).
  double normal();

  bool bernoulli(double p);

  /// Child generator seeded from this stream (advances this generator once).
  Rng split();

  /// Pure seed derivation for per-item streams: mix(seed, stream_id).
  static Rng derive(std::uint64_t seed, std::uint64_t stream_id);

  /// splitmix64 finalizer; used for seed/stream mixing.
  static std::uint64_t mix64(std::uint64_t x);

  /// FNV-1a 64-bit string hash, for deriving per-path streams.
  static std::uint64_t hash_str(std::string_view s);

  /// Raw state access, for checkpointing.
  void state(std::uint64_t out[4]) const;
  void set_state(const std::uint64_t in[4]);

 private:
  std::uint64_t s_[4];
};

}  // namespace objcrop
