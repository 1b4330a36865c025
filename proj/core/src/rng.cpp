#include "fpbetter/rng.hpp"

#include <cmath>
#include <numbers>

namespace fpb {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Rng Rng::stream(std::uint64_t seed, StreamId id, std::uint64_t sub) noexcept {
  std::uint64_t key = mix64(seed + kGolden);
  key = mix64(key ^ (static_cast<std::uint64_t>(id) * 0xD1B54A32D192ED03ULL));
  key = mix64(key ^ (sub + 1) * 0xAEF17502108EF2D9ULL);
  return Rng(key, 0);
}

std::uint64_t Rng::next_u64() noexcept {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double Rng::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

double Rng::normal() noexcept {
  // 1 - u lies in (0, 1], keeping the logarithm finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

bool Rng::bernoulli(double p) noexcept { return uniform() < p; }

double Rng::rademacher() noexcept { return (next_u64() >> 63) ? 1.0 : -1.0; }

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  // Lemire's multiply-shift; the bias is below 2^-64 * n and irrelevant here.
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

}  // namespace fpb
