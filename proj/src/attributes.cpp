#include "nbr/attributes.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "nbr/error.hpp"

namespace nbr {

namespace {

constexpr int kSidecarVersion = 1;

double clamp_high(double v, const char* what, double input) {
  if (v > 1.0) {
    spdlog::warn("{} parameter {} is past the encoder range; clamped to 1", what, input);
    return 1.0;
  }
  return v;
}

}  // namespace

std::string channel_order_tag() {
  std::string s;
  for (auto name : kChannelOrder) {
    if (!s.empty()) s += ',';
    s += name;
  }
  return s;
}

double AttributeVector::operator[](int channel) const {
  switch (channel) {
    case 0: return noise;
    case 1: return scale;
    case 2: return jpeg;
  }
  throw InvalidParameter("attribute channel must be 0, 1 or 2, got " + std::to_string(channel));
}

double& AttributeVector::operator[](int channel) {
  switch (channel) {
    case 0: return noise;
    case 1: return scale;
    case 2: return jpeg;
  }
  throw InvalidParameter("attribute channel must be 0, 1 or 2, got " + std::to_string(channel));
}

double encode_noise(double sigma) {
  if (!(sigma >= 0.0)) throw InvalidParameter("noise sigma must be >= 0");
  return clamp_high(sigma / kNoiseSigmaFull, "noise", sigma);
}

double encode_scale(double factor) {
  if (!(factor >= 1.0)) throw InvalidParameter("scale factor must be >= 1");
  return clamp_high((factor - 1.0) / (kScaleFull - 1.0), "scale", factor);
}

double encode_jpeg(double quality) {
  if (!(quality >= 0.0 && quality <= 100.0))
    throw InvalidParameter("jpeg quality must be in [0,100]");
  return (100.0 - quality) / 100.0;
}

double decode_noise(double value) { return value * kNoiseSigmaFull; }
double decode_scale(double value) { return value * (kScaleFull - 1.0) + 1.0; }
double decode_jpeg(double value) { return 100.0 - value * 100.0; }

AttributeVector from_spec(const DegradationSpec& spec) {
  validate(spec);
  AttributeVector v;
  switch (spec.kind) {
    case DegradationKind::awgn:
      v.noise = encode_noise(spec.param);
      return v;
    case DegradationKind::scale:
      v.scale = encode_scale(spec.param);
      return v;
    case DegradationKind::jpeg:
      v.jpeg = encode_jpeg(spec.param);
      return v;
    case DegradationKind::salt_pepper:
    case DegradationKind::upscale_percent:
      break;
  }
  throw NoTrueAttribute(std::string(to_string(spec.kind)) +
                        " has no attribute channel; choose a surrogate attribute explicitly");
}

AttributeMap::AttributeMap(int height, int width) : planes_(height, width, 3) {}

AttributeMap::AttributeMap(Image planes) : planes_(std::move(planes)) {
  if (planes_.channels() != kAttributeChannels)
    throw ShapeMismatch("attribute map needs 3 planes, got " +
                        std::to_string(planes_.channels()));
  clip_unit(planes_);
}

AttributeMap constant_map(const AttributeVector& vec, int height, int width) {
  AttributeMap map(height, width);
  for (int c = 0; c < kAttributeChannels; ++c) {
    const float v = static_cast<float>(std::clamp(vec[c], 0.0, 1.0));
    std::ranges::fill(map.plane(c), v);
  }
  return map;
}

AttributeMap gradient_map(int channel, double v_start, double v_end, RampAxis axis,
                          int height, int width) {
  if (channel < 0 || channel >= kAttributeChannels)
    throw InvalidParameter("attribute channel must be 0, 1 or 2, got " + std::to_string(channel));
  if (!(v_start >= 0.0 && v_start <= 1.0 && v_end >= 0.0 && v_end <= 1.0))
    throw InvalidParameter("ramp endpoints must lie in [0,1]");
  AttributeMap map(height, width);
  const int n = axis == RampAxis::horizontal ? width : height;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int i = axis == RampAxis::horizontal ? x : y;
      const double t = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
      map.planes().at(channel, y, x) = static_cast<float>(v_start + (v_end - v_start) * t);
    }
  return map;
}

void check_matches(const AttributeMap& map, const Image& img) {
  if (map.height() != img.height() || map.width() != img.width())
    throw ShapeMismatch("attribute map is " + std::to_string(map.height()) + "x" +
                        std::to_string(map.width()) + " but image is " +
                        std::to_string(img.height()) + "x" + std::to_string(img.width()));
}

Bytes encode_attribute_map(const AttributeMap& map) { return encode_png16(map.planes()); }

AttributeMap decode_attribute_map(std::span<const unsigned char> png) {
  Image img = decode_png(png);
  if (img.channels() != kAttributeChannels)
    throw FormatError("attribute map PNG must have 3 color planes");
  return AttributeMap(std::move(img));
}

void save_attribute_map(const std::filesystem::path& path, const AttributeMap& map) {
  write_file_atomic(path, encode_attribute_map(map));
  nlohmann::json meta = {
      {"version", kSidecarVersion},
      {"channel_order", std::vector<std::string>(kChannelOrder.begin(), kChannelOrder.end())},
      {"height", map.height()},
      {"width", map.width()},
      {"encoding", "png16:round(v*65535)"},
  };
  const std::string text = meta.dump(2) + "\n";
  auto side = path;
  side += ".json";
  write_file_atomic(side, {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

AttributeMap load_attribute_map(const std::filesystem::path& path) {
  AttributeMap map = decode_attribute_map(read_file(path));
  auto side = path;
  side += ".json";
  if (std::filesystem::exists(side)) {
    const auto bytes = read_file(side);
    const auto meta = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (meta.is_discarded()) throw FormatError("unreadable sidecar " + side.string());
    if (meta.value("version", 0) != kSidecarVersion)
      throw FormatError("unsupported attribute map sidecar version in " + side.string());
    const auto order = meta.value("channel_order", std::vector<std::string>{});
    if (order != std::vector<std::string>(kChannelOrder.begin(), kChannelOrder.end()))
      throw FormatError("attribute map " + path.string() + " has channel order that differs from " +
                        channel_order_tag());
  }
  return map;
}

}  // namespace nbr
