#pragma once

// Counter-based random numbers with portable sub-streams.
//
// Algorithm identifier: "philox4x32-10/splitmix64-substreams".
//   * Block function: Philox4x32 with 10 rounds (Salmon et al., Random123).
//   * Key   = 64-bit master seed (low word, high word).
//   * Counter = (block index low, block index high, stream id low, stream id high).
//   * Child stream ids: id' = splitmix64(id ^ splitmix64(tag)).
//   * One block yields two 64-bit outputs: (x1 << 32 | x0), (x3 << 32 | x2).
//   * Doubles in [0,1) use the top 53 bits; open-interval draws add half an ulp.
//   * Normals use the cosine branch of Box-Muller on two consecutive draws.
// Every derived value depends only on (seed, stream id, draw index), so results
// do not depend on thread count or evaluation order.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string_view>

namespace fdnet {

inline constexpr std::string_view kRngAlgorithm = "philox4x32-10/splitmix64-substreams";

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

constexpr PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) noexcept {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kW0;
      key[1] += kW1;
    }
    const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// FNV-1a, used to turn textual stage names into stream tags.
constexpr std::uint64_t tag_of(std::string_view name) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

/// A deterministic random stream addressed by (seed, stream id).
///
/// Sequential draws advance an internal 64-bit draw index; `u64_at` gives
/// random access to the same sequence without touching that index.
class Stream {
 public:
  constexpr explicit Stream(std::uint64_t seed, std::uint64_t id = 0) noexcept
      : seed_(seed), id_(id) {}

  constexpr std::uint64_t seed() const noexcept { return seed_; }
  constexpr std::uint64_t id() const noexcept { return id_; }
  constexpr std::uint64_t position() const noexcept { return position_; }

  constexpr Stream child(std::uint64_t tag) const noexcept {
    return Stream(seed_, splitmix64(id_ ^ splitmix64(tag)));
  }
  constexpr Stream child(std::string_view name) const noexcept { return child(tag_of(name)); }

  /// A 64-bit seed summarising this stream, for APIs that take plain seeds.
  constexpr std::uint64_t derived_seed() const noexcept {
    return splitmix64(seed_ ^ splitmix64(id_ + 0x632BE59BD9B4E019ull));
  }

  constexpr std::uint64_t u64_at(std::uint64_t index) const noexcept {
    const std::uint64_t block = index >> 1;
    const PhiloxCounter ctr{static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
                            static_cast<std::uint32_t>(id_), static_cast<std::uint32_t>(id_ >> 32)};
    const PhiloxKey key{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
    const PhiloxCounter out = philox4x32_10(ctr, key);
    if ((index & 1u) == 0) return (std::uint64_t{out[1]} << 32) | out[0];
    return (std::uint64_t{out[3]} << 32) | out[2];
  }

  /// Uniform in [0, 1).
  constexpr double uniform_at(std::uint64_t index) const noexcept {
    return static_cast<double>(u64_at(index) >> 11) * 0x1.0p-53;
  }

  constexpr std::uint64_t next_u64() noexcept { return u64_at(position_++); }

  /// Uniform in [0, 1).
  constexpr double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1).
  constexpr double uniform_open() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() noexcept {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Gamma(shape, 1) by Marsaglia-Tsang; shapes below one use the boost trick.
  double gamma(double shape) noexcept {
    if (shape < 1.0) {
      const double g = gamma(shape + 1.0);
      return g * std::pow(uniform_open(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = 0.0;
      double v = 0.0;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_open();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Uniform integer in [0, bound) by 128-bit multiply (bias below 2^-64 * bound).
  std::uint64_t below(std::uint64_t bound) noexcept {
    const unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t id_;
  std::uint64_t position_ = 0;
};

}  // namespace fdnet
