#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "nbr/codec.hpp"
#include "nbr/degradation.hpp"
#include "nbr/image.hpp"

namespace nbr {

inline constexpr int kAttributeChannels = 3;
// Plane order of every attribute map, persisted in checkpoints and sidecars.
inline constexpr std::array<std::string_view, kAttributeChannels> kChannelOrder{
    "noise", "scale", "jpeg"};
std::string channel_order_tag();

// Sigma (intensity units) that maps to a noise attribute of one.
inline constexpr double kNoiseSigmaFull = 55.0 / 255.0;
inline constexpr double kScaleFull = 4.0;

struct AttributeVector {
  double noise = 0.0;
  double scale = 0.0;
  double jpeg = 0.0;

  double operator[](int channel) const;
  double& operator[](int channel);
  friend bool operator==(const AttributeVector&, const AttributeVector&) = default;
};

// Linear encoders onto [0,1]. Inputs below the domain throw; inputs past the
// "full" end are clamped to 1 with a logged warning.
double encode_noise(double sigma);      // sigma / (55/255)
double encode_scale(double factor);     // (factor - 1) / 3
double encode_jpeg(double quality);     // (100 - quality) / 100

// Inverse affine maps (no clamping).
double decode_noise(double value);
double decode_scale(double value);
double decode_jpeg(double value);

// Only awgn, scale and jpeg have a true attribute; other kinds throw
// NoTrueAttribute.
AttributeVector from_spec(const DegradationSpec& spec);

// H x W x 3 planes in kChannelOrder, values in [0,1].
class AttributeMap {
 public:
  AttributeMap() = default;
  AttributeMap(int height, int width);
  // Takes a 3-channel image as (noise, scale, jpeg) planes.
  explicit AttributeMap(Image planes);

  int height() const noexcept { return planes_.height(); }
  int width() const noexcept { return planes_.width(); }
  const Image& planes() const noexcept { return planes_; }
  Image& planes() noexcept { return planes_; }
  std::span<const float> plane(int channel) const { return planes_.plane(channel); }
  std::span<float> plane(int channel) { return planes_.plane(channel); }

  friend bool operator==(const AttributeMap&, const AttributeMap&) = default;

 private:
  Image planes_;
};

AttributeMap constant_map(const AttributeVector& vec, int height, int width);

enum class RampAxis { horizontal, vertical };

// Selected plane ramps linearly from v_start at the first column (row) to
// v_end at the last; the other planes are zero.
AttributeMap gradient_map(int channel, double v_start, double v_end, RampAxis axis,
                          int height, int width);

// Throws ShapeMismatch naming both sizes when the map does not match the image.
void check_matches(const AttributeMap& map, const Image& img);

// 16-bit 3-plane PNG, value = round(v * 65535).
Bytes encode_attribute_map(const AttributeMap& map);
AttributeMap decode_attribute_map(std::span<const unsigned char> png);

// PNG at `path` plus a `<path>.json` sidecar with channel order and version.
void save_attribute_map(const std::filesystem::path& path, const AttributeMap& map);
AttributeMap load_attribute_map(const std::filesystem::path& path);

}  // namespace nbr
