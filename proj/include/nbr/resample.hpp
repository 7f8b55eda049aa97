#pragma once

#include "nbr/image.hpp"

namespace nbr {

// Catmull-Rom cubic kernel (a = -0.5).
double cubic_kernel(double x) noexcept;

// Separable bicubic resize with half-pixel-centred coordinates:
//   src = (dst + 0.5) * in / out - 0.5
// When shrinking, the kernel is stretched by the scale ratio so it acts as an
// anti-aliasing filter (the MATLAB imresize convention). Samples outside the
// image are clamped to the nearest edge pixel and weights are normalised, so
// constant images stay constant. Output is clipped to [0,1].
Image resize_bicubic(const Image& img, int out_height, int out_width);

}  // namespace nbr
