#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "nbr/error.hpp"
#include "nbr/metrics.hpp"
#include "support.hpp"

using namespace nbr;
using nbr::testing::checkerboard;
using nbr::testing::random_image;
using nbr::testing::synthetic_scene;

TEST(Psnr, ClosedForms) {
  const Image zero(16, 16, 1, 0.0f);
  EXPECT_NEAR(psnr(zero, Image(16, 16, 1, 0.5f)), 6.0206, 1e-4);
  EXPECT_NEAR(psnr(zero, Image(16, 16, 1, 0.1f)), 20.0, 1e-6);
}

TEST(Psnr, IdenticalIsInfinite) {
  const Image a = random_image(20, 30, 3);
  EXPECT_EQ(psnr(a, a), std::numeric_limits<double>::infinity());
}

TEST(Psnr, ShapeMismatchThrows) {
  EXPECT_THROW(psnr(Image(4, 4), Image(4, 5)), ShapeMismatch);
}

TEST(Psnr, MatchesDirectMse) {
  const Image a = random_image(33, 17, 1);
  const Image b = random_image(33, 17, 2);
  long double sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = static_cast<long double>(a.pixels()[i]) - b.pixels()[i];
    sum += d * d;
  }
  const double oracle = 10.0 * std::log10(1.0 / static_cast<double>(sum / a.size()));
  EXPECT_NEAR(psnr(a, b), oracle, 1e-9);
}

TEST(Psnr, DecreasesWithNoiseAmplitude) {
  const Image ref = synthetic_scene(40, 40);
  const Image noise = random_image(40, 40, 9);
  double prev = std::numeric_limits<double>::infinity();
  for (double t : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    Image test = ref;
    for (std::size_t i = 0; i < test.size(); ++i)
      test.pixels()[i] += static_cast<float>(t * (noise.pixels()[i] - 0.5));
    const double p = psnr(ref, test);
    EXPECT_LT(p, prev) << "t=" << t;
    prev = p;
  }
}

TEST(Psnr, Symmetric) {
  const Image a = random_image(25, 25, 4);
  const Image b = random_image(25, 25, 5);
  EXPECT_NEAR(psnr(a, b), psnr(b, a), 1e-12);
}

TEST(Ssim, IdenticalIsOne) {
  const Image a = synthetic_scene(48, 40);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
}

TEST(Ssim, ConstantImagesFollowLuminanceTerm) {
  const double c1 = 0.01 * 0.01;
  for (auto [a, b] : {std::pair{0.2, 0.7}, std::pair{0.5, 0.5}, std::pair{0.0, 1.0}, std::pair{0.9, 0.1}}) {
    const double expected = (2 * a * b + c1) / (a * a + b * b + c1);
    const double got = ssim(Image(20, 20, 1, static_cast<float>(a)), Image(20, 20, 1, static_cast<float>(b)));
    EXPECT_NEAR(got, expected, 1e-6) << a << " vs " << b;
  }
}

TEST(Ssim, InvertedBinaryImageIsAnticorrelated) {
  const Image ref = checkerboard(32, 32, 2);
  Image inv = ref;
  for (auto& v : inv.pixels()) v = 1.0f - v;
  const double s = ssim(ref, inv);
  EXPECT_GE(s, -1.0);
  EXPECT_LT(s, 0.0);
}

TEST(Ssim, Symmetric) {
  const Image a = synthetic_scene(30, 30, 1);
  const Image b = random_image(30, 30, 6);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
}

TEST(Ssim, ShiftedImageScoresBelowOne) {
  const Image a = synthetic_scene(40, 40, 3);
  Image shifted(40, 40);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) shifted.at(0, y, x) = a.at(0, y, std::max(0, x - 1));
  EXPECT_LT(ssim(a, shifted), 1.0);
}

TEST(Ssim, SmallerThanWindowThrows) {
  EXPECT_THROW(ssim(Image(10, 40), Image(10, 40)), InvalidParameter);
}

TEST(CropBorder, Examples) {
  const Image img = random_image(10, 10, 1);
  const Image c = crop_border(img, 2);
  EXPECT_EQ(c.height(), 6);
  EXPECT_EQ(c.width(), 6);
  EXPECT_EQ(c.at(0, 0, 0), img.at(0, 2, 2));
  EXPECT_EQ(crop_border(img, 0), img);
  EXPECT_THROW(crop_border(Image(4, 4), 2), InvalidParameter);
}

TEST(TotalVariation, Checkerboard) {
  // 8x8 alternating: every one of the 2 * 8 * 7 neighbour pairs differs by 1.
  EXPECT_DOUBLE_EQ(total_variation(checkerboard(8, 8)), 112.0);
  EXPECT_DOUBLE_EQ(total_variation(Image(5, 5, 1, 0.3f)), 0.0);
}
