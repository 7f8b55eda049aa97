#include "nbr/metrics.hpp"

#include <cmath>
#include <vector>

#include "nbr/error.hpp"

namespace nbr {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeMismatch(std::string(what) + ": shapes differ (" + a.shape_string() + " vs " +
                        b.shape_string() + ")");
}

// Separable 1-D factor of the Gaussian window.
std::vector<double> gaussian_1d(int size, double sigma) {
  std::vector<double> w(size);
  const double c = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) total += w[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
  for (double& v : w) v /= total;
  return w;
}

// "Valid" correlation of a plane with a separable window.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = h - n + 1, ow = w - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace

double mse(const Image& a, const Image& b) {
  require_same(a, b, "mse");
  const auto& pa = a.pixels();
  const auto& pb = b.pixels();
  double acc = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = static_cast<double>(pa[i]) - pb[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pa.size());
}

double psnr(const Image& ref, const Image& test) {
  const double e = mse(ref, test);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / e);
}

double ssim(const Image& ref, const Image& test, const SsimOptions& opt) {
  require_same(ref, test, "ssim");
  if (ref.height() < opt.window || ref.width() < opt.window)
    throw InvalidParameter("ssim: image " + ref.shape_string() + " is smaller than the " +
                           std::to_string(opt.window) + "x" + std::to_string(opt.window) +
                           " window");
  const double c1 = opt.k1 * opt.k1;
  const double c2 = opt.k2 * opt.k2;
  const auto k = gaussian_1d(opt.window, opt.sigma);
  const int h = ref.height(), w = ref.width();
  const std::size_t n = ref.plane_size();

  double total = 0.0;
  for (int c = 0; c < ref.channels(); ++c) {
    std::vector<double> a(n), b(n), aa(n), bb(n), ab(n);
    auto pa = ref.plane(c);
    auto pb = test.plane(c);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = pa[i];
      b[i] = pb[i];
      aa[i] = a[i] * a[i];
      bb[i] = b[i] * b[i];
      ab[i] = a[i] * b[i];
    }
    const auto mu_a = filter_valid(a, h, w, k);
    const auto mu_b = filter_valid(b, h, w, k);
    const auto s_aa = filter_valid(aa, h, w, k);
    const auto s_bb = filter_valid(bb, h, w, k);
    const auto s_ab = filter_valid(ab, h, w, k);
    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = s_aa[i] - ma * ma;
      const double vb = s_bb[i] - mb * mb;
      const double cov = s_ab[i] - ma * mb;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total += acc / static_cast<double>(mu_a.size());
  }
  return total / ref.channels();
}

MetricResult measure(const Image& ref, const Image& test) {
  return {psnr(ref, test), ssim(ref, test)};
}

double total_variation(const Image& img) {
  double tv = 0.0;
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        const double v = img.at(c, y, x);
        if (x + 1 < img.width()) tv += std::abs(img.at(c, y, x + 1) - v);
        if (y + 1 < img.height()) tv += std::abs(img.at(c, y + 1, x) - v);
      }
  return tv;
}

}  // namespace nbr
