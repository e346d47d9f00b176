#include <gtest/gtest.h>

#include <limits>
#include <sstream>

#include "support.hpp"

using namespace srcyc;
using namespace srcyc::testing;

TEST(Psnr, ClosedForms) {
  const Image a = random_image(3, 20, 20, 1, 0.1, 0.9);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  Image b = a;
  for (double& v : b.values()) v += 1.0 / 255.0;
  EXPECT_NEAR(psnr(a, b), 20.0 * std::log10(255.0), 1e-9);
  EXPECT_DOUBLE_EQ(psnr(a, b), psnr(b, a));
  EXPECT_THROW(psnr(a, Image(3, 20, 21)), ImageError);
}

TEST(Psnr, DecreasesWithNoise) {
  const Image base(3, 64, 64, 0.5);
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {1.0, 2.0, 4.0, 8.0}) {
    double acc = 0;
    for (std::uint64_t seed = 0; seed < 4; ++seed) acc += psnr(base, add_sensor_noise(base, sigma, seed));
    EXPECT_LT(acc / 4, prev);
    prev = acc / 4;
  }
}

TEST(Ssim, MatchesWindowedLoopOracle) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Image a = random_image(3, 32, 32, 100 + seed);
    Image b = a;
    Rng rng(seed);
    for (double& v : b.values()) v = std::clamp(v + 0.2 * rng.normal(), 0.0, 1.0);
    EXPECT_NEAR(ssim(a, b), reference_ssim(a, b), 1e-6);
  }
}

TEST(Ssim, IdentitySymmetryInversionAndTransforms) {
  const Image a = random_image(3, 24, 30, 7);
  const Image b = random_image(3, 24, 30, 8);
  EXPECT_EQ(ssim(a, a), 1.0);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-15);
  for (const auto t : all_transforms())
    EXPECT_NEAR(ssim(apply_transform(a, t), apply_transform(b, t)), ssim(a, b), 1e-9);

  Image binary(1, 16, 16), inverted(1, 16, 16);
  Rng rng(9);
  for (std::size_t i = 0; i < binary.size(); ++i) {
    binary.values()[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    inverted.values()[i] = 1.0 - binary.values()[i];
  }
  EXPECT_LT(ssim(binary, inverted), 0.0);
  EXPECT_THROW(ssim(Image(1, 8, 8), Image(1, 8, 8)), ShapeError);
}

TEST(MsSsim, ScaleCountAndIdentity) {
  EXPECT_EQ(ms_ssim_scales(161, 200), 5);
  EXPECT_EQ(ms_ssim_scales(160, 200), 4);
  EXPECT_EQ(ms_ssim_scales(16, 16), 1);
  EXPECT_EQ(ms_ssim_scales(10, 50), 0);
  const Image a = random_image(3, 48, 48, 3);
  EXPECT_EQ(ms_ssim(a, a), 1.0);
  const double v = ms_ssim(a, random_image(3, 48, 48, 4));
  EXPECT_GE(v, 0.0);
  EXPECT_LE(v, 1.0);
}

TEST(MsSsim, SingleScaleEqualsClampedSsim) {
  const Image a = random_image(1, 16, 16, 5), b = random_image(1, 16, 16, 6);
  EXPECT_NEAR(ms_ssim(a, b), std::max(0.0, ssim(a, b)), 1e-12);
}

namespace {

struct MeanAbs final : PerceptualMetric {
  std::string name() const override { return "mad"; }
  double operator()(const Image& a, const Image& b) const override {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.values()[i] - b.values()[i]);
    return s / static_cast<double>(a.size());
  }
};

}  // namespace

TEST(EvaluateDir, IdenticalDirectories) {
  const auto dir = scratch_dir("eval_same");
  for (int i = 0; i < 3; ++i) save_image(random_image(3, 16, 16, i), dir / ("img" + std::to_string(i) + ".png"));
  const MetricReport r = evaluate_dir(dir, dir);
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_TRUE(r.ok());
  EXPECT_EQ(r.mean_ssim(), 1.0);
  EXPECT_EQ(r.infinite_psnr_count(), 3);
  EXPECT_EQ(r.rows[0].name, "img0.png");
  std::ostringstream table;
  r.print_table(table);
  EXPECT_NE(table.str().find("infinite PSNR"), std::string::npos);
}

TEST(EvaluateDir, ConstructedMseFixtures) {
  const auto dir = scratch_dir("eval_mse");
  std::filesystem::create_directories(dir / "sr");
  std::filesystem::create_directories(dir / "hr");
  // Offsets of k/255 give MSE (k/255)^2 exactly after 8-bit quantization.
  double expected = 0;
  for (int k = 1; k <= 3; ++k) {
    Image hr(3, 12, 12, 100.0 / 255.0);
    Image sr(3, 12, 12, (100.0 + 4 * k) / 255.0);
    save_image(hr, dir / "hr" / ("p" + std::to_string(k) + ".png"));
    save_image(sr, dir / "sr" / ("p" + std::to_string(k) + ".png"));
    expected += 20 * std::log10(255.0 / (4 * k));
  }
  const MeanAbs mad;
  const MetricReport r = evaluate_dir(dir / "sr", dir / "hr", &mad);
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_NEAR(r.mean_psnr(), expected / 3, 0.01);
  ASSERT_TRUE(r.mean_perceptual().has_value());
  EXPECT_NEAR(*r.mean_perceptual(), 8.0 / 255.0, 1e-9);
  std::ostringstream csv;
  r.write_csv(csv);
  EXPECT_EQ(csv.str().substr(0, 18), "name,psnr,ssim,mad");
}

TEST(EvaluateDir, UnmatchedFilesAreFailures) {
  const auto dir = scratch_dir("eval_missing");
  std::filesystem::create_directories(dir / "sr");
  std::filesystem::create_directories(dir / "hr");
  save_image(Image(3, 12, 12, 0.5), dir / "sr" / "a.png");
  save_image(Image(3, 12, 12, 0.5), dir / "hr" / "a.png");
  save_image(Image(3, 12, 12, 0.5), dir / "sr" / "only_sr.png");
  save_image(Image(3, 12, 12, 0.5), dir / "hr" / "only_hr.png");
  save_image(Image(3, 14, 12, 0.5), dir / "sr" / "z.png");
  save_image(Image(3, 12, 12, 0.5), dir / "hr" / "z.png");
  const MetricReport r = evaluate_dir(dir / "sr", dir / "hr");
  EXPECT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.failures.size(), 3u);
  EXPECT_FALSE(r.ok());
}
