#pragma once

#include <cstdint>

namespace fpb {

/// Independent random streams derived from one run seed. Each consumer owns
/// exactly one stream so that, for example, changing how many masks are
/// drawn never shifts the attack noise.
enum class StreamId : std::uint64_t {
  init = 1,
  masks = 2,
  attacks = 3,
  shuffle = 4,
  data = 5,
  eval = 6,
  landscape = 7,
  bound = 8,
  augment = 9,
};

/// Counter-based 64-bit generator. Draw i of a stream keyed by k is
/// mix64(k + (i + 1) * 0x9E3779B97F4A7C15), where mix64 is the SplitMix64
/// finalizer. The full state is (key, counter), so streams serialize into
/// two integers and can be positioned arbitrarily.
class Rng {
 public:
  explicit Rng(std::uint64_t key = 0, std::uint64_t counter = 0) noexcept
      : key_(key), counter_(counter) {}

  /// Stream `id` for run `seed`, optionally split further by `sub`
  /// (epoch, batch index, ...).
  static Rng stream(std::uint64_t seed, StreamId id, std::uint64_t sub = 0) noexcept;

  std::uint64_t next_u64() noexcept;

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) noexcept;
  /// Standard normal via Box-Muller; consumes two draws per call.
  double normal() noexcept;
  /// True with probability p (p <= 0 never, p >= 1 always).
  bool bernoulli(double p) noexcept;
  /// +1 or -1 with equal probability.
  double rademacher() noexcept;
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

std::uint64_t mix64(std::uint64_t z) noexcept;

}  // namespace fpb
