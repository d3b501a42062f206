#include <gtest/gtest.h>

#include <cmath>

#include "drfn/metrics.hpp"
#include "oracles/oracles.hpp"
#include "test_util.hpp"

using drfn::ImageY;

namespace {

ImageY textured(std::size_t h, std::size_t w, int variant) {
  return drfn::rgb_to_luminance(testutil::synthetic_gray(h, w, variant));
}

}  // namespace

TEST(ShaveBorder, ZeroIsIdentityAndCropsEverySide) {
  const ImageY img = textured(10, 10, 0);
  EXPECT_EQ(drfn::shave_border(img, 0), img);
  const ImageY s = drfn::shave_border(img, 2);
  EXPECT_EQ(s.h(), 6u);
  EXPECT_EQ(s.w(), 6u);
  EXPECT_EQ(s(0, 0), img(2, 2));
  EXPECT_EQ(s(5, 5), img(7, 7));
  EXPECT_THROW(drfn::shave_border(img, 5), drfn::ShapeError);
}

TEST(Psnr, IdenticalIsInfinite) {
  const ImageY img = textured(16, 16, 1);
  EXPECT_TRUE(std::isinf(drfn::psnr(img, img)));
  EXPECT_EQ(drfn::psnr(img, img), drfn::kPsnrIdentical);
}

TEST(Psnr, UniformOneLevelOffset) {
  const ImageY a(8, 8, 0.5f), b(8, 8, 0.5f + 1.0f / 255.0f);
  EXPECT_NEAR(drfn::psnr(a, b), 20.0 * std::log10(255.0), 1e-3);
  EXPECT_NEAR(drfn::psnr(a, b), 48.13, 5e-3);
  EXPECT_THROW(drfn::psnr(a, ImageY(8, 7)), drfn::ShapeError);
}

TEST(Ssim, IdenticalIsOne) {
  const ImageY img = textured(20, 24, 2);
  EXPECT_NEAR(drfn::ssim(img, img), 1.0, 1e-9);
}

TEST(Ssim, MatchesDirectWindowReference) {
  const ImageY a = textured(24, 30, 3);
  std::vector<float> inv(a.values().begin(), a.values().end());
  for (float& v : inv) v = 1.0f - v;
  const ImageY b(a.h(), a.w(), inv);
  EXPECT_NEAR(drfn::ssim(a, b), oracle::ssim(a, b), 1e-6);
  const ImageY c = textured(24, 30, 4);
  EXPECT_NEAR(drfn::ssim(a, c), oracle::ssim(a, c), 1e-6);
  EXPECT_LT(drfn::ssim(a, c), 1.0);
  EXPECT_THROW(drfn::ssim(ImageY(10, 30), ImageY(10, 30)), drfn::ShapeError);
}

TEST(EvaluateDataset, SameDirectoryIsPerfect) {
  testutil::TempDir dir("eval-same");
  drfn::write_image(dir / "a.png", testutil::synthetic_gray(40, 40, 0));
  drfn::write_image(dir / "b.png", testutil::synthetic_gray(36, 44, 1));
  const auto r = drfn::evaluate_dataset(dir.path(), dir.path(), 4);
  ASSERT_EQ(r.per_image.size(), 2u);
  EXPECT_EQ(r.failures(), 0u);
  EXPECT_TRUE(std::isinf(r.mean_psnr));
  EXPECT_NEAR(r.mean_ssim, 1.0, 1e-9);
  EXPECT_EQ(r.shave, 4u);
}

TEST(EvaluateDataset, CorruptAndMissingFilesAreNamed) {
  testutil::TempDir gt("eval-gt"), sr("eval-sr");
  for (const char* n : {"a.png", "b.png", "c.png"}) drfn::write_image(gt / n, testutil::synthetic_gray(32, 32, 2));
  drfn::write_image(sr / "a.png", testutil::synthetic_gray(32, 32, 3));
  testutil::write_bytes(sr / "b.png", {0x89, 'P', 'N', 'G', 0});
  const auto r = drfn::evaluate_dataset(sr.path(), gt.path(), 2);
  ASSERT_EQ(r.per_image.size(), 3u);
  EXPECT_EQ(r.failures(), 2u);
  EXPECT_FALSE(r.per_image[0].error);
  ASSERT_TRUE(r.per_image[1].error);
  ASSERT_TRUE(r.per_image[2].error);
  EXPECT_EQ(r.per_image[1].name, "b.png");
  EXPECT_EQ(r.mean_psnr, r.per_image[0].psnr);
  EXPECT_NE(r.to_text().find("b.png"), std::string::npos);
  EXPECT_NE(r.to_csv().find("c.png"), std::string::npos);
}

TEST(BicubicBaseline, KeepsCroppedShapeAndLosesDetail) {
  const ImageY hr = textured(34, 30, 5);
  const ImageY base = drfn::bicubic_baseline(hr, 4);
  EXPECT_EQ(base.h(), 32u);
  EXPECT_EQ(base.w(), 28u);
  const double p = drfn::psnr(drfn::shave_border(base, 4), drfn::shave_border(drfn::modcrop(hr, 4), 4));
  EXPECT_GT(p, 15.0);
  EXPECT_LT(p, 60.0);
}
