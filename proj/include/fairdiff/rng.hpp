#pragma once

// Counter-based random streams (Philox4x32-10, Salmon et al. SC'11).
//
// A stream is identified by (seed, stream id); the n-th draw of a stream is a
// pure function of (seed, stream id, n). Parallel workers that own disjoint
// stream ids therefore produce identical results regardless of scheduling.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace fairdiff {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

namespace detail {

inline constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

constexpr PhiloxCounter philox_round(const PhiloxCounter& c, const PhiloxKey& k) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * c[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * c[2];
  const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const auto lo0 = static_cast<std::uint32_t>(p0);
  const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const auto lo1 = static_cast<std::uint32_t>(p1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

}  // namespace detail

// The raw Philox4x32 bijection with 10 rounds.
constexpr PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) {
  ctr = detail::philox_round(ctr, key);
  for (int r = 1; r < 10; ++r) {
    key[0] += detail::kPhiloxW0;
    key[1] += detail::kPhiloxW1;
    ctr = detail::philox_round(ctr, key);
  }
  return ctr;
}

// Uniform double in the open interval (0, 1) built from 53 random bits.
constexpr double open_unit_interval(std::uint32_t a, std::uint32_t b) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(a >> 5) << 26) | (b >> 6);
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  double uniform() {
    if (uniform_pos_ >= 2) refill_uniforms();
    return uniform_buf_[uniform_pos_++];
  }

  // Standard normal via Box-Muller; each Philox block yields two normals.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const PhiloxCounter r = next_block();
    const double u1 = open_unit_interval(r[0], r[1]);
    const double u2 = open_unit_interval(r[2], r[3]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  std::uint64_t blocks_consumed() const { return block_; }

 private:
  PhiloxCounter next_block() {
    const PhiloxCounter ctr{static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                            static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    ++block_;
    return philox4x32_10(ctr, key_);
  }

  void refill_uniforms() {
    const PhiloxCounter r = next_block();
    uniform_buf_[0] = open_unit_interval(r[0], r[1]);
    uniform_buf_[1] = open_unit_interval(r[2], r[3]);
    uniform_pos_ = 0;
  }

  PhiloxKey key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
  std::array<double, 2> uniform_buf_{};
  int uniform_pos_ = 2;
};

}  // namespace fairdiff
