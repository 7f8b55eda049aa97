#include <cmath>

#include <gtest/gtest.h>

#include "nbr/codec.hpp"
#include "nbr/degradation.hpp"
#include "nbr/error.hpp"
#include "nbr/metrics.hpp"
#include "nbr/resample.hpp"
#include "support.hpp"

using namespace nbr;
using nbr::testing::checkerboard;
using nbr::testing::corpus_dir;
using nbr::testing::random_image;
using nbr::testing::synthetic_scene;

namespace {

void expect_unit_range(const Image& img) {
  for (float v : img.pixels()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
}

Image camera() { return to_luma(read_image(corpus_dir("eval") / "camera.png")); }

// Mean squared step across 8x8 block seams minus the mean squared step inside
// blocks, over both axes.
double blockiness(const Image& img) {
  double seam = 0, inner = 0;
  long ns = 0, ni = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x + 1 < img.width(); ++x) {
      const double d = img.at(0, y, x + 1) - img.at(0, y, x);
      if (x % 8 == 7) seam += d * d, ++ns;
      else inner += d * d, ++ni;
    }
  for (int y = 0; y + 1 < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const double d = img.at(0, y + 1, x) - img.at(0, y, x);
      if (y % 8 == 7) seam += d * d, ++ns;
      else inner += d * d, ++ni;
    }
  return seam / ns - inner / ni;
}

}  // namespace

TEST(Awgn, ZeroSigmaIsIdentity) {
  const Image img = random_image(31, 29, 1);
  EXPECT_EQ(apply_awgn(img, 0.0, 123), img);
}

TEST(Awgn, MidGrayStatistics) {
  const double sigma = 25.0 / 255.0;
  const Image img(512, 512, 1, 0.5f);
  const Image out = apply_awgn(img, sigma, 7);
  double sum = 0, sq = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = static_cast<double>(out.pixels()[i]) - img.pixels()[i];
    sum += d;
    sq += d * d;
  }
  const double n = static_cast<double>(out.size());
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_LT(std::abs(mean), 1e-3);
  EXPECT_NEAR(sd, sigma, 0.02 * sigma);
  EXPECT_NEAR(psnr(img, out), 20.0 * std::log10(255.0 / 25.0), 0.1);
  expect_unit_range(out);
}

TEST(Awgn, SeedDeterminesOutput) {
  const Image img = random_image(40, 40, 2);
  EXPECT_EQ(apply_awgn(img, 0.1, 5), apply_awgn(img, 0.1, 5));
  EXPECT_NE(apply_awgn(img, 0.1, 5), apply_awgn(img, 0.1, 6));
}

TEST(Awgn, NegativeSigmaThrows) {
  EXPECT_THROW(apply_awgn(Image(4, 4), -0.1, 0), InvalidParameter);
}

TEST(Awgn, ClipsAtExtremes) {
  const Image out = apply_awgn(Image(64, 64, 1, 1.0f), 0.5, 3);
  expect_unit_range(out);
}

TEST(Scale, FactorOneIsIdentity) {
  const Image img = random_image(30, 20, 3);
  EXPECT_EQ(apply_scale_degradation(img, 1), img);
}

TEST(Scale, ConstantsStayConstant) {
  for (int s : {2, 3, 4}) {
    const Image out = apply_scale_degradation(Image(37, 41, 1, 0.37f), s);
    ASSERT_EQ(out.height(), 37);
    ASSERT_EQ(out.width(), 41);
    for (float v : out.pixels()) ASSERT_NEAR(v, 0.37f, 1e-4) << "s=" << s;
  }
}

TEST(Scale, HighFrequencyDegradesMore) {
  const Image board = checkerboard(32, 32);
  Image smooth(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) smooth.at(0, y, x) = static_cast<float>((x + y) / 62.0);
  EXPECT_LT(psnr(board, apply_scale_degradation(board, 2)),
            psnr(smooth, apply_scale_degradation(smooth, 2)));
}

TEST(Scale, InvalidFactorThrows) {
  EXPECT_THROW(apply_scale_degradation(Image(16, 16), 5), InvalidParameter);
  EXPECT_THROW(apply_scale_degradation(Image(16, 16), 0), InvalidParameter);
  EXPECT_THROW(apply(Image(16, 16), {DegradationKind::scale, 2.5, 0}), InvalidParameter);
}

TEST(Jpeg, HigherQualityIsCloser) {
  const Image img = synthetic_scene(64, 64);
  EXPECT_GT(psnr(img, apply_jpeg(img, 100)), psnr(img, apply_jpeg(img, 10)));
}

TEST(Jpeg, ConstantGrayStaysConstant) {
  const Image out = apply_jpeg(Image(64, 64, 1, 0.5f), 10);
  for (float v : out.pixels()) ASSERT_NEAR(v, 0.5f, 1.0f / 255.0f + 1e-6f);
}

TEST(Jpeg, BlockBoundariesSharpenAtQuality30) {
  const Image img = camera();
  EXPECT_GT(blockiness(apply_jpeg(img, 30)), blockiness(img));
}

TEST(Jpeg, QualityRange) {
  EXPECT_THROW(apply_jpeg(Image(8, 8), 0), InvalidParameter);
  EXPECT_THROW(apply_jpeg(Image(8, 8), 101), InvalidParameter);
}

TEST(Jpeg, KeepsShapeAndRange) {
  const Image img = random_image(23, 45, 4);
  const Image out = apply_jpeg(img, 50);
  EXPECT_TRUE(out.same_shape(img));
  expect_unit_range(out);
}

TEST(SaltPepper, DensityZeroIsIdentity) {
  const Image img = random_image(20, 20, 5);
  EXPECT_EQ(apply_salt_pepper(img, 0.0, 1), img);
}

TEST(SaltPepper, AffectedFractionAndBalance) {
  const Image img(512, 512, 1, 0.5f);
  const Image out = apply_salt_pepper(img, 0.05, 11);
  long zeros = 0, ones = 0, other = 0;
  for (float v : out.pixels()) {
    if (v == 0.0f) ++zeros;
    else if (v == 1.0f) ++ones;
    else if (v == 0.5f) ++other;
    else FAIL() << "unexpected value " << v;
  }
  const double n = static_cast<double>(out.size());
  const double frac = (zeros + ones) / n;
  EXPECT_NEAR(frac, 0.05, 0.005);
  const double bound = 3.0 * std::sqrt(n * 0.05 * 0.95) / n;
  EXPECT_NEAR(frac, 0.05, bound);
  const double hits = static_cast<double>(zeros + ones);
  EXPECT_NEAR(zeros / hits, 0.5, 3.0 * std::sqrt(0.25 / hits));
}

TEST(SaltPepper, FullDensityIsBinary) {
  const Image out = apply_salt_pepper(random_image(30, 30, 6), 1.0, 2);
  for (float v : out.pixels()) EXPECT_TRUE(v == 0.0f || v == 1.0f);
}

TEST(SaltPepper, DensityRange) {
  EXPECT_THROW(apply_salt_pepper(Image(8, 8), 1.5, 0), InvalidParameter);
  EXPECT_THROW(apply_salt_pepper(Image(8, 8), -0.1, 0), InvalidParameter);
}

TEST(Upscale, OnePercentSizes) {
  Image out = apply_upscale_percent(random_image(100, 100, 7), 1.0);
  EXPECT_EQ(out.height(), 101);
  EXPECT_EQ(out.width(), 101);
  out = apply_upscale_percent(random_image(50, 80, 7), 1.0);
  EXPECT_EQ(out.height(), 51);
  EXPECT_EQ(out.width(), 81);
  expect_unit_range(out);
  EXPECT_EQ(upscaled_size(50, 1.0), 51);
  EXPECT_EQ(upscaled_size(481, 1.0), 486);
}

TEST(Upscale, ZeroPercentIsIdentity) {
  const Image img = random_image(33, 21, 8);
  const Image out = apply_upscale_percent(img, 0.0);
  ASSERT_TRUE(out.same_shape(img));
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out.pixels()[i], img.pixels()[i], 1e-6);
}

TEST(Upscale, CollapsingSizeThrows) {
  EXPECT_THROW(apply_upscale_percent(Image(2, 2), -90.0), InvalidParameter);
  EXPECT_THROW(apply_upscale_percent(Image(2, 2), -100.0), InvalidParameter);
}

TEST(Resize, CatmullRomKernel) {
  EXPECT_DOUBLE_EQ(cubic_kernel(0.0), 1.0);
  EXPECT_DOUBLE_EQ(cubic_kernel(1.0), 0.0);
  EXPECT_DOUBLE_EQ(cubic_kernel(2.0), 0.0);
  EXPECT_DOUBLE_EQ(cubic_kernel(0.5), 0.5625);
  EXPECT_DOUBLE_EQ(cubic_kernel(1.5), -0.0625);
}

TEST(Chain, AwgnThenJpegEqualsComposition) {
  const Image img = synthetic_scene(48, 48);
  const DegradationChain chain{{{DegradationKind::awgn, 50.0 / 255.0, 99}, {DegradationKind::jpeg, 30, 0}}};
  EXPECT_EQ(apply_chain(img, chain), apply_jpeg(apply_awgn(img, 50.0 / 255.0, 99), 30));
}

TEST(Chain, Associative) {
  const Image img = synthetic_scene(40, 52, 2);
  const DegradationSpec a{DegradationKind::awgn, 0.1, 3};
  const DegradationSpec b{DegradationKind::jpeg, 40, 0};
  const DegradationSpec c{DegradationKind::upscale_percent, 1, 0};
  const Image whole = apply_chain(img, {{a, b, c}});
  const Image split = apply_chain(apply_chain(img, {{a}}), {{b, c}});
  EXPECT_EQ(whole, split);
  EXPECT_EQ(whole.height(), upscaled_size(40, 1.0));
}

TEST(Chain, JpegThenUpscale) {
  const Image img = synthetic_scene(60, 70);
  const Image out = apply_chain(img, {{{DegradationKind::jpeg, 10, 0}, {DegradationKind::upscale_percent, 1, 0}}});
  EXPECT_EQ(out.height(), 61);
  EXPECT_EQ(out.width(), 71);
}

TEST(Chain, EmptyThrows) {
  EXPECT_THROW(apply_chain(Image(4, 4), {}), InvalidParameter);
}

TEST(Chain, ErrorCarriesStepIndex) {
  const DegradationChain chain{{{DegradationKind::awgn, 0.1, 0}, {DegradationKind::jpeg, 30, 0}, {DegradationKind::scale, 7, 0}}};
  try {
    apply_chain(Image(16, 16, 1, 0.5f), chain);
    FAIL() << "expected ChainError";
  } catch (const ChainError& e) {
    EXPECT_EQ(e.step(), 2u);
  }
}

TEST(Kinds, NamesRoundTrip) {
  for (auto k : {DegradationKind::awgn, DegradationKind::scale, DegradationKind::jpeg,
                 DegradationKind::salt_pepper, DegradationKind::upscale_percent})
    EXPECT_EQ(parse_kind(to_string(k)), k);
  EXPECT_FALSE(parse_kind("blur").has_value());
}

TEST(Operators, PureAcrossRepeats) {
  const Image img = synthetic_scene(50, 50, 4);
  for (const DegradationSpec& s : {DegradationSpec{DegradationKind::awgn, 0.2, 1}, {DegradationKind::scale, 3, 0},
                                   {DegradationKind::jpeg, 20, 0}, {DegradationKind::salt_pepper, 0.1, 5},
                                   {DegradationKind::upscale_percent, 1, 0}}) {
    const Image a = apply(img, s);
    EXPECT_EQ(a, apply(img, s));
    expect_unit_range(a);
  }
}
