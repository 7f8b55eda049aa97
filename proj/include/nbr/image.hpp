#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace nbr {

enum class Colorspace { grayscale, rgb };

// Planar float image: channel-major, then rows, then columns. Intensities are
// kept in [0,1] by every public operation.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels = 1, float fill = 0.0f);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(height_) * width_;
  }
  std::size_t size() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }
  Colorspace colorspace() const noexcept {
    return channels_ == 3 ? Colorspace::rgb : Colorspace::grayscale;
  }

  float& at(int c, int y, int x) noexcept {
    return pixels_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  float at(int c, int y, int x) const noexcept {
    return pixels_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }

  std::span<float> plane(int c) noexcept {
    return {pixels_.data() + c * plane_size(), plane_size()};
  }
  std::span<const float> plane(int c) const noexcept {
    return {pixels_.data() + c * plane_size(), plane_size()};
  }

  std::vector<float>& pixels() noexcept { return pixels_; }
  const std::vector<float>& pixels() const noexcept { return pixels_; }

  bool same_shape(const Image& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }
  std::string shape_string() const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> pixels_;
};

void clip_unit(Image& img) noexcept;

// BT.601 luma for RGB input; grayscale input is returned unchanged.
Image to_luma(const Image& img);

Image crop(const Image& img, int y0, int x0, int height, int width);

// Removes `pixels` rows/columns on each side.
Image crop_border(const Image& img, int pixels);

// 8-bit quantization used for every persisted or codec-bound image:
// round(clip(v,0,1) * 255) with ties rounded up.
unsigned char quantize8(float v) noexcept;
unsigned short quantize16(float v) noexcept;

}  // namespace nbr
