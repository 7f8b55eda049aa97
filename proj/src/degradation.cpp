#include "nbr/degradation.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>

#include "nbr/codec.hpp"
#include "nbr/error.hpp"
#include "nbr/resample.hpp"
#include "nbr/rng.hpp"

namespace nbr {

namespace {

constexpr std::array<std::pair<DegradationKind, std::string_view>, 5> kKindNames{{
    {DegradationKind::awgn, "awgn"},
    {DegradationKind::scale, "scale"},
    {DegradationKind::jpeg, "jpeg"},
    {DegradationKind::salt_pepper, "salt_pepper"},
    {DegradationKind::upscale_percent, "upscale_percent"},
}};

bool is_integer(double v) { return std::isfinite(v) && std::floor(v) == v; }

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::string_view to_string(DegradationKind kind) noexcept {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

std::optional<DegradationKind> parse_kind(std::string_view name) noexcept {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  return std::nullopt;
}

void validate(const DegradationSpec& spec) {
  const double p = spec.param;
  if (!std::isfinite(p))
    throw InvalidParameter(std::string(to_string(spec.kind)) + " parameter is not finite");
  switch (spec.kind) {
    case DegradationKind::awgn:
      if (p < 0.0) throw InvalidParameter("awgn sigma must be >= 0, got " + num(p));
      break;
    case DegradationKind::scale:
      if (!is_integer(p) || p < 1 || p > 4)
        throw InvalidParameter("scale factor must be one of 1,2,3,4, got " + num(p));
      break;
    case DegradationKind::jpeg:
      if (!is_integer(p) || p < 1 || p > 100)
        throw InvalidParameter("jpeg quality must be an integer in [1,100], got " + num(p));
      break;
    case DegradationKind::salt_pepper:
      if (p < 0.0 || p > 1.0)
        throw InvalidParameter("salt_pepper density must be in [0,1], got " + num(p));
      break;
    case DegradationKind::upscale_percent:
      if (p <= -100.0)
        throw InvalidParameter("upscale percent must be > -100, got " + num(p));
      break;
  }
}

Image apply_awgn(const Image& img, double sigma, std::uint64_t seed) {
  validate({DegradationKind::awgn, sigma, seed});
  if (sigma == 0.0) return img;
  SplitMix64 rng(derive_key(seed, "awgn"));
  Image out = img;
  for (float& v : out.pixels()) {
    const double n = v + sigma * rng.gaussian();
    v = static_cast<float>(std::clamp(n, 0.0, 1.0));
  }
  return out;
}

Image apply_scale_degradation(const Image& img, int factor) {
  validate({DegradationKind::scale, static_cast<double>(factor), 0});
  if (factor == 1) return img;
  if (img.height() < factor || img.width() < factor)
    throw InvalidParameter("image " + img.shape_string() +
                           " too small for scale factor " + std::to_string(factor));
  const int lh = (img.height() + factor - 1) / factor;
  const int lw = (img.width() + factor - 1) / factor;
  return resize_bicubic(resize_bicubic(img, lh, lw), img.height(), img.width());
}

Image apply_jpeg(const Image& img, int quality) {
  validate({DegradationKind::jpeg, static_cast<double>(quality), 0});
  Image out = decode_jpeg(encode_jpeg(img, quality));
  if (out.channels() != img.channels()) throw FormatError("JPEG round trip changed channels");
  return out;
}

Image apply_salt_pepper(const Image& img, double density, std::uint64_t seed) {
  validate({DegradationKind::salt_pepper, density, seed});
  if (density == 0.0) return img;
  SplitMix64 rng(derive_key(seed, "salt_pepper"));
  Image out = img;
  const double half = density / 2.0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const double u = rng.uniform();
      if (u >= density) continue;
      const float v = u < half ? 0.0f : 1.0f;
      for (int c = 0; c < img.channels(); ++c) out.at(c, y, x) = v;
    }
  return out;
}

int upscaled_size(int n, double percent) {
  const double exact = n * (1.0 + percent / 100.0);
  // Half-up rounding; the small slack absorbs representation error such as
  // 50 * 1.01 = 50.499999999999993.
  return static_cast<int>(std::floor(exact + 0.5 + 1e-9));
}

Image apply_upscale_percent(const Image& img, double percent) {
  validate({DegradationKind::upscale_percent, percent, 0});
  const int h = upscaled_size(img.height(), percent);
  const int w = upscaled_size(img.width(), percent);
  if (h < 1 || w < 1)
    throw InvalidParameter("upscale by " + num(percent) + "% of " + img.shape_string() +
                           " gives an empty image");
  return resize_bicubic(img, h, w);
}

Image apply(const Image& img, const DegradationSpec& spec) {
  switch (spec.kind) {
    case DegradationKind::awgn:
      return apply_awgn(img, spec.param, spec.seed);
    case DegradationKind::scale:
      validate(spec);
      return apply_scale_degradation(img, static_cast<int>(spec.param));
    case DegradationKind::jpeg:
      validate(spec);
      return apply_jpeg(img, static_cast<int>(spec.param));
    case DegradationKind::salt_pepper:
      return apply_salt_pepper(img, spec.param, spec.seed);
    case DegradationKind::upscale_percent:
      return apply_upscale_percent(img, spec.param);
  }
  throw InvalidParameter("unknown degradation kind");
}

Image apply_chain(const Image& img, const DegradationChain& chain) {
  if (chain.steps.empty()) throw InvalidParameter("degradation chain is empty");
  Image cur = img;
  for (std::size_t i = 0; i < chain.steps.size(); ++i) {
    try {
      cur = apply(cur, chain.steps[i]);
    } catch (const ChainError&) {
      throw;
    } catch (const Error& e) {
      throw ChainError(i, std::string(to_string(chain.steps[i].kind)) + ": " + e.what());
    }
  }
  return cur;
}

}  // namespace nbr
