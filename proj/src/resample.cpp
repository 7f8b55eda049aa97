#include "nbr/resample.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "nbr/error.hpp"

namespace nbr {

double cubic_kernel(double x) noexcept {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

namespace {

// Per output index: the contributing input indices (clamped) and weights.
std::vector<std::vector<std::pair<int, double>>> contributions(int in, int out) {
  const double scale = static_cast<double>(out) / in;
  const double stretch = scale < 1.0 ? 1.0 / scale : 1.0;
  const double support = 2.0 * stretch;
  std::vector<std::vector<std::pair<int, double>>> table(out);
  for (int o = 0; o < out; ++o) {
    const double center = (o + 0.5) / scale - 0.5;
    const int lo = static_cast<int>(std::floor(center - support));
    const int hi = static_cast<int>(std::ceil(center + support));
    double total = 0.0;
    auto& row = table[o];
    for (int i = lo; i <= hi; ++i) {
      const double w = cubic_kernel((center - i) / stretch);
      if (w == 0.0) continue;
      const int idx = std::clamp(i, 0, in - 1);
      auto it = std::find_if(row.begin(), row.end(),
                             [idx](const auto& p) { return p.first == idx; });
      if (it == row.end())
        row.emplace_back(idx, w);
      else
        it->second += w;
      total += w;
    }
    for (auto& p : row) p.second /= total;
  }
  return table;
}

}  // namespace

Image resize_bicubic(const Image& img, int out_height, int out_width) {
  if (out_height < 1 || out_width < 1)
    throw InvalidParameter("resize target must be at least 1x1, got " +
                           std::to_string(out_height) + "x" +
                           std::to_string(out_width));
  if (out_height == img.height() && out_width == img.width()) return img;

  const auto col_taps = contributions(img.width(), out_width);
  const auto row_taps = contributions(img.height(), out_height);
  Image out(out_height, out_width, img.channels());
  std::vector<double> horiz(static_cast<std::size_t>(img.height()) * out_width);

  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < img.height(); ++y) {
      const float* src = img.plane(c).data() + static_cast<std::size_t>(y) * img.width();
      double* dst = &horiz[static_cast<std::size_t>(y) * out_width];
      for (int x = 0; x < out_width; ++x) {
        double acc = 0.0;
        for (const auto& [i, w] : col_taps[x]) acc += w * src[i];
        dst[x] = acc;
      }
    }
    for (int y = 0; y < out_height; ++y) {
      float* dst = &out.at(c, y, 0);
      for (int x = 0; x < out_width; ++x) {
        double acc = 0.0;
        for (const auto& [i, w] : row_taps[y])
          acc += w * horiz[static_cast<std::size_t>(i) * out_width + x];
        dst[x] = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
    }
  }
  return out;
}

}  // namespace nbr
