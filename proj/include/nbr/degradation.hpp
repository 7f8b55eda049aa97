#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nbr/image.hpp"

namespace nbr {

enum class DegradationKind { awgn, scale, jpeg, salt_pepper, upscale_percent };

std::string_view to_string(DegradationKind kind) noexcept;
std::optional<DegradationKind> parse_kind(std::string_view name) noexcept;

// One degradation step. `param` units depend on the kind:
//   awgn            sigma in [0,1] intensity units
//   scale           integer factor in {1,2,3,4}
//   jpeg            integer quality in [1,100]
//   salt_pepper     density in [0,1]
//   upscale_percent percent change of each side, > -100
struct DegradationSpec {
  DegradationKind kind = DegradationKind::awgn;
  double param = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const DegradationSpec&, const DegradationSpec&) = default;
};

struct DegradationChain {
  std::vector<DegradationSpec> steps;

  friend bool operator==(const DegradationChain&, const DegradationChain&) = default;
};

// Throws InvalidParameter if param is outside its kind's range.
void validate(const DegradationSpec& spec);

// out = clip(img + n, 0, 1), n ~ N(0, sigma^2) i.i.d. per sample.
Image apply_awgn(const Image& img, double sigma, std::uint64_t seed);

// Bicubic downscale by `factor` followed by bicubic upscale back to the input
// size. factor == 1 is the identity.
Image apply_scale_degradation(const Image& img, int factor);

// decode(encode(img, quality)) through baseline JPEG on the 8-bit image.
Image apply_jpeg(const Image& img, int quality);

// Each pixel location is independently hit with probability `density`; a hit
// becomes 0 or 1 with equal probability (all channels alike).
Image apply_salt_pepper(const Image& img, double density, std::uint64_t seed);

// Resizes each side to round_half_up(n * (1 + percent/100)).
Image apply_upscale_percent(const Image& img, double percent);
int upscaled_size(int n, double percent);

Image apply(const Image& img, const DegradationSpec& spec);

// Left-to-right application. Step failures are rethrown as ChainError.
Image apply_chain(const Image& img, const DegradationChain& chain);

}  // namespace nbr
