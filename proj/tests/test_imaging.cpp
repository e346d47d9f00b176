#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"

using namespace srcyc;
using namespace srcyc::testing;

TEST(Image, RejectsBadShapes) {
  EXPECT_THROW(Image(2, 4, 4), ImageError);
  EXPECT_THROW(Image(3, 0, 4), ImageError);
  EXPECT_THROW(Image(1, 2, 2, std::vector<double>(3)), ImageError);
  EXPECT_NO_THROW(Image(1, 1, 1));
}

TEST(Image, TransformsMatchIndexRemapOracle) {
  const Image img = random_image(3, 5, 7, 1);
  for (const auto t : all_transforms()) {
    const Image got = apply_transform(img, t);
    EXPECT_EQ(got, reference_transform(img, t.rotation, t.hflip)) << t.rotation << (t.hflip ? " flip" : "");
    EXPECT_EQ(apply_transform(got, inverse(t)), img);
  }
}

TEST(Image, QuarterTurnIsCounterClockwise) {
  // [[1,2],[3,4]] turned counter-clockwise is [[2,4],[1,3]].
  Image img(1, 2, 2, std::vector<double>{1, 2, 3, 4});
  const Image r = apply_transform(img, {1, false});
  EXPECT_EQ(std::vector<double>(r.values().begin(), r.values().end()), (std::vector<double>{2, 4, 1, 3}));
}

TEST(Image, PatchPairsStayAligned) {
  Image hr(1, 32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) hr.at(0, y, x) = (y / 4) * 8 + x / 4;
  Image lr(1, 8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) lr.at(0, y, x) = y * 8 + x;
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const PatchPair p = extract_patch_pair(hr, lr, 3, 4, rng);
    ASSERT_EQ(p.hr.height(), 12);
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) EXPECT_EQ(p.lr.at(0, y, x), p.hr.at(0, 4 * y + 1, 4 * x + 2));
  }
  EXPECT_THROW(extract_patch_pair(hr, lr, 9, 4, rng), ImageError);
  EXPECT_THROW(extract_patch_pair(hr, lr, 3, 2, rng), ImageError);
}

TEST(Image, BatchRoundTrip) {
  std::vector<Image> imgs{random_image(3, 4, 5, 1), random_image(3, 4, 5, 2)};
  const auto t = to_batch<double>(std::span<const Image>(imgs));
  EXPECT_EQ(t.shape(), (Shape{2, 3, 4, 5}));
  EXPECT_EQ(from_batch(t), imgs);
}

TEST(ImageIo, PngRoundTripIsExactOn8BitValues) {
  const auto dir = scratch_dir("png");
  Image img(3, 6, 5);
  Rng rng(4);
  for (double& v : img.values()) v = rng.uniform_int(0, 255) / 255.0;
  save_image(img, dir / "a.png");
  const Image back = load_image(dir / "a.png");
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back.values()[i], img.values()[i], 1e-12);

  Image gray(1, 3, 3, 0.5);
  save_image(gray, dir / "g.png");
  EXPECT_EQ(load_image(dir / "g.png").channels(), 1);
}

TEST(ImageIo, TypedErrors) {
  const auto dir = scratch_dir("png_err");
  try {
    load_image(dir / "missing.png");
    FAIL();
  } catch (const ImageIoError& e) {
    EXPECT_EQ(e.code(), ImageIoErrc::file_not_found);
  }
  std::ofstream(dir / "junk.png") << "not an image";
  try {
    load_image(dir / "junk.png");
    FAIL();
  } catch (const ImageIoError& e) {
    EXPECT_EQ(e.code(), ImageIoErrc::not_png);
  }
  Image bad(1, 2, 2, 1.5);
  try {
    save_image(bad, dir / "bad.png");
    FAIL();
  } catch (const ImageIoError& e) {
    EXPECT_EQ(e.code(), ImageIoErrc::out_of_range);
  }
}

TEST(Bicubic, DownsampleMatchesDenseOracle) {
  for (int s : {2, 3, 4}) {
    const Image img = random_image(3, 12 * s / 2 * 2, 8 * s, 10 + s);
    const Image fast = bicubic_downsample(img, s);
    const Image slow = reference_downsample(img, s);
    ASSERT_TRUE(fast.same_shape(slow));
    for (std::size_t i = 0; i < fast.size(); ++i) EXPECT_NEAR(fast.values()[i], slow.values()[i], 1e-6);
  }
}

TEST(Bicubic, PreservesConstantsAndShapes) {
  Image c(3, 20, 24, 0.37);
  const Image d = bicubic_downsample(c, 4);
  EXPECT_EQ(d.height(), 5);
  EXPECT_EQ(d.width(), 6);
  for (double v : d.values()) EXPECT_NEAR(v, 0.37, 1e-6);
  const Image u = bicubic_upsample(d, 4);
  for (double v : u.values()) EXPECT_NEAR(v, 0.37, 1e-6);
  EXPECT_THROW(bicubic_downsample(c, 7), ImageError);
  EXPECT_EQ(bicubic_downsample(c, 1), c);
}

TEST(Bicubic, UpsampleInterpolatesKnownKernelWeights) {
  // Interior sample of a 2x upsample: offsets 0.25/0.75 give weights
  // (-0.0703125, 0.8671875, 0.2265625, -0.0234375).
  EXPECT_NEAR(cubic_kernel(1.25), -0.0703125, 1e-12);
  EXPECT_NEAR(cubic_kernel(0.25), 0.8671875, 1e-12);
  EXPECT_NEAR(cubic_kernel(0.75), 0.2265625, 1e-12);
  EXPECT_NEAR(cubic_kernel(1.75), -0.0234375, 1e-12);
  EXPECT_EQ(symmetric_index(-1, 5), 0);
  EXPECT_EQ(symmetric_index(5, 5), 4);
  EXPECT_EQ(symmetric_index(-3, 5), 2);
}

TEST(Degradation, NoiseStatisticsAtSigmaEight) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Image gray(3, 256, 256, 0.5);
    const Image noisy = add_sensor_noise(gray, 8.0, seed);
    double acc = 0, acc2 = 0;
    for (std::size_t i = 0; i < gray.size(); ++i) {
      const double r = noisy.values()[i] - 0.5;
      acc += r;
      acc2 += r * r;
    }
    const double n = static_cast<double>(gray.size());
    const double sd = std::sqrt(acc2 / n - (acc / n) * (acc / n)) * 255.0;
    EXPECT_GE(sd, 7.6);
    EXPECT_LE(sd, 8.4);
  }
}

TEST(Degradation, DeterministicPerSeedAndClipped) {
  const Image hr = random_image(3, 32, 32, 5);
  DegradationSpec spec{4, 25.0, std::nullopt, 9};
  const Image a = degrade(hr, spec);
  EXPECT_EQ(a, degrade(hr, spec));
  spec.seed = 10;
  EXPECT_NE(a, degrade(hr, spec));
  EXPECT_TRUE(in_unit_range(a));
  EXPECT_EQ(a.height(), 8);
  EXPECT_THROW(degrade(hr, {5, 0.0, std::nullopt, 0}), DegradationError);
  EXPECT_THROW(degrade(hr, {4, -1.0, std::nullopt, 0}), DegradationError);
  EXPECT_THROW(degrade(hr, {4, 0.0, 0, 0}), DegradationError);
}

TEST(Degradation, ZeroNoiseNoJpegEqualsClippedDownsample) {
  const Image hr = random_image(3, 16, 16, 6);
  EXPECT_EQ(degrade(hr, {4, 0.0, std::nullopt, 0}), clip(bicubic_downsample(hr, 4)));
}

TEST(Degradation, JpegRoundTrip) {
  Image smooth(3, 32, 32);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) smooth.at(c, y, x) = 0.2 + 0.02 * x + 0.005 * y * c;
  smooth = clip(smooth);
  const Image q95 = jpeg_compress(smooth, 95);
  const Image q10 = jpeg_compress(smooth, 10);
  EXPECT_TRUE(in_unit_range(q10));
  double e95 = 0, e10 = 0;
  for (std::size_t i = 0; i < smooth.size(); ++i) {
    e95 += std::abs(q95.values()[i] - smooth.values()[i]);
    e10 += std::abs(q10.values()[i] - smooth.values()[i]);
  }
  EXPECT_LT(e95, e10);
  EXPECT_LT(e95 / smooth.size(), 0.02);
  EXPECT_THROW(jpeg_compress(smooth, 101), DegradationError);
  const Image gray = jpeg_compress(Image(1, 8, 8, 0.5), 90);
  EXPECT_EQ(gray.channels(), 1);
}

TEST(Degradation, DirectoryModeWritesManifest) {
  const auto dir = scratch_dir("degrade");
  std::filesystem::create_directories(dir / "hr");
  save_image(clip(random_image(3, 16, 16, 1)), dir / "hr" / "b.png");
  save_image(clip(random_image(3, 16, 16, 2)), dir / "hr" / "a.png");
  DegradationSpec spec{4, 8.0, 75, 100};
  const auto rows = degrade_directory(dir / "hr", dir / "lr", spec);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].hr_path.filename(), "a.png");
  EXPECT_EQ(rows[1].spec.seed, 101u);
  write_manifest(rows, dir / "lr" / "manifest.csv");
  std::ifstream in(dir / "lr" / "manifest.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "hr_path,lr_path,scale,sigma,jpeg_q,seed");
  const auto back = read_manifest(dir / "lr" / "manifest.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].spec.jpeg_quality, 75);
  EXPECT_EQ(load_image(back[0].lr_path).height(), 4);
}

TEST(NoiseEstimate, RecoversGaussianNoiseLevel) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Image noisy = add_sensor_noise(Image(3, 64, 64, 0.5), 8.0, seed);
    const double s = estimate_noise_sigma(noisy);
    EXPECT_GE(s, 6.5);
    EXPECT_LE(s, 9.5);
  }
}

TEST(NoiseEstimate, ConstantAndOffsetInvariance) {
  EXPECT_EQ(estimate_noise_sigma(Image(3, 16, 16, 0.3)), 0.0);
  const Image noisy = add_sensor_noise(Image(1, 32, 32, 0.4), 5.0, 7);
  Image shifted = noisy;
  for (double& v : shifted.values()) v += 0.1;
  EXPECT_NEAR(estimate_noise_sigma(noisy), estimate_noise_sigma(shifted), 1e-9);
  EXPECT_LE(estimate_noise_sigma(random_image(3, 32, 32, 8)), kMaxNoiseSigma);
  EXPECT_EQ(estimate_noise_sigma(Image(1, 2, 2, 0.1)), 0.0);
}
