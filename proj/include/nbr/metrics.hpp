#pragma once

#include <limits>

#include "nbr/image.hpp"

namespace nbr {

struct MetricResult {
  double psnr_db = 0.0;  // +infinity for identical images
  double ssim = 0.0;
};

// 10*log10(1/MSE) with peak 1.0.
double psnr(const Image& ref, const Image& test);
double mse(const Image& a, const Image& b);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

// Mean local SSIM over all window positions fully inside the image, with a
// Gaussian-weighted window. Multi-channel images average the per-channel
// values.
double ssim(const Image& ref, const Image& test, const SsimOptions& opt = {});

MetricResult measure(const Image& ref, const Image& test);

// Sum of absolute horizontal and vertical neighbour differences.
double total_variation(const Image& img);

}  // namespace nbr
