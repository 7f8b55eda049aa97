#include "nbr/image.hpp"

#include <algorithm>
#include <cmath>

#include "nbr/error.hpp"

namespace nbr {

Image::Image(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 1 || width < 1)
    throw InvalidParameter("image dimensions must be at least 1x1, got " +
                           std::to_string(height) + "x" + std::to_string(width));
  if (channels != 1 && channels != 3)
    throw InvalidParameter("image must have 1 or 3 channels, got " +
                           std::to_string(channels));
  pixels_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

std::string Image::shape_string() const {
  std::string s = std::to_string(height_) + "x" + std::to_string(width_);
  if (channels_ != 1) s += "x" + std::to_string(channels_);
  return s;
}

void clip_unit(Image& img) noexcept {
  for (float& v : img.pixels()) v = std::clamp(v, 0.0f, 1.0f);
}

Image to_luma(const Image& img) {
  if (img.channels() == 1) return img;
  Image out(img.height(), img.width(), 1);
  auto r = img.plane(0), g = img.plane(1), b = img.plane(2);
  auto o = out.plane(0);
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double v = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
    o[i] = std::clamp(static_cast<float>(v), 0.0f, 1.0f);
  }
  return out;
}

Image crop(const Image& img, int y0, int x0, int height, int width) {
  if (y0 < 0 || x0 < 0 || height < 1 || width < 1 || y0 + height > img.height() ||
      x0 + width > img.width())
    throw InvalidParameter("crop window (" + std::to_string(y0) + "," +
                           std::to_string(x0) + ") " + std::to_string(height) + "x" +
                           std::to_string(width) + " outside image " +
                           img.shape_string());
  Image out(height, width, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < height; ++y) {
      const auto src = img.plane(c).subspan(static_cast<std::size_t>(y0 + y) * img.width() + x0,
                                            static_cast<std::size_t>(width));
      std::copy(src.begin(), src.end(), out.plane(c).begin() + static_cast<std::ptrdiff_t>(y) * width);
    }
  return out;
}

Image crop_border(const Image& img, int pixels) {
  if (pixels < 0) throw InvalidParameter("border crop must be non-negative");
  if (pixels == 0) return img;
  if (2 * pixels >= std::min(img.height(), img.width()))
    throw InvalidParameter("border crop of " + std::to_string(pixels) +
                           " px leaves nothing of " + img.shape_string());
  return crop(img, pixels, pixels, img.height() - 2 * pixels,
              img.width() - 2 * pixels);
}

unsigned char quantize8(float v) noexcept {
  const double s = std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0;
  return static_cast<unsigned char>(std::floor(s + 0.5));
}

unsigned short quantize16(float v) noexcept {
  const double s = std::clamp(static_cast<double>(v), 0.0, 1.0) * 65535.0;
  return static_cast<unsigned short>(std::floor(s + 0.5));
}

}  // namespace nbr
