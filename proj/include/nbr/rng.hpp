#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace nbr {

// SplitMix64. The state is a plain counter advanced by a fixed odd increment
// and every output is a bijective mix of that counter, so a stream is fully
// described by its 64-bit key and reproduces identically on any platform.
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t key) noexcept : state_(key) {}

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  constexpr std::uint64_t next() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // Uniform in [0,1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Rejection keeps it unbiased.
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t r;
    do r = next();
    while (r >= limit);
    return r % n;
  }

  // Standard normal via Box-Muller; the second variate of each pair is cached.
  double gaussian() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do u1 = uniform();
    while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// FNV-1a over a tag, used to give each operator kind its own stream.
constexpr std::uint64_t tag_hash(std::string_view tag) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Independent stream key for (seed, tag, index).
constexpr std::uint64_t derive_key(std::uint64_t seed, std::string_view tag,
                                   std::uint64_t index = 0) noexcept {
  std::uint64_t k = SplitMix64::mix(seed ^ tag_hash(tag));
  return SplitMix64::mix(k + 0x9e3779b97f4a7c15ULL * (index + 1));
}

}  // namespace nbr
