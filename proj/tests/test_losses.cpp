#include <gtest/gtest.h>

#include <numbers>

#include "support.hpp"

using namespace srcyc;
using namespace srcyc::testing;

namespace {

Var<double> cst(const Tensor<double>& t) { return Var<double>::constant(t); }

}  // namespace

TEST(ContentL1, MatchesLoopOracle) {
  const auto a = random_tensor({2, 3, 5, 4}, 1), b = random_tensor({2, 3, 5, 4}, 2);
  double ref = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ref += std::abs(a[i] - b[i]);
  ref /= static_cast<double>(a.size());
  EXPECT_NEAR(content_l1(cst(a), cst(b)).item(), ref, 1e-12);
  EXPECT_EQ(content_l1(cst(a), cst(a)).item(), 0.0);
  EXPECT_EQ(cyclic_loss(cst(a), cst(b)).item(), content_l1(cst(a), cst(b)).item());
}

TEST(Perceptual, ZeroAtIdentitySymmetricAndUnavailableErrors) {
  const auto phi = ConvFeatureExtractor<double>::fallback();
  const auto a = random_tensor({1, 3, 16, 16}, 3), b = random_tensor({1, 3, 16, 16}, 4);
  EXPECT_EQ(perceptual_loss(cst(a), cst(a), phi).item(), 0.0);
  EXPECT_NEAR(perceptual_loss(cst(a), cst(b), phi).item(), perceptual_loss(cst(b), cst(a), phi).item(), 1e-15);
  EXPECT_GT(perceptual_loss(cst(a), cst(b), phi).item(), 0.0);

  const auto missing = ConvFeatureExtractor<double>::from_file("/nonexistent/weights.ckpt");
  EXPECT_FALSE(missing.available());
  try {
    perceptual_loss(cst(a), cst(b), missing);
    FAIL();
  } catch (const LossError& e) {
    EXPECT_NE(std::string(e.what()).find("fallback"), std::string::npos);
  }
}

TEST(Perceptual, FallbackIsReproducibleAndLoadable) {
  const auto dir = scratch_dir("phi");
  const auto a = random_tensor({1, 3, 8, 8}, 5), b = random_tensor({1, 3, 8, 8}, 6);
  const auto p1 = ConvFeatureExtractor<double>::fallback(), p2 = ConvFeatureExtractor<double>::fallback();
  EXPECT_EQ(perceptual_loss(cst(a), cst(b), p1).item(), perceptual_loss(cst(a), cst(b), p2).item());

  Checkpoint ck;
  Rng rng(42);
  int in = 3;
  for (int i = 0; i < 3; ++i) {
    const int out = ConvFeatureExtractor<double>::kWidths[i];
    ck.add("stage" + std::to_string(i) + ".weight", uniform_fan_in<double>({out, in, 3, 3}, in * 9, rng));
    ck.add("stage" + std::to_string(i) + ".bias", uniform_fan_in<double>({out}, in * 9, rng));
    in = out;
  }
  ck.save(dir / "phi.ckpt");
  const auto loaded = ConvFeatureExtractor<double>::from_file(dir / "phi.ckpt");
  EXPECT_TRUE(loaded.available());
  EXPECT_NE(perceptual_loss(cst(a), cst(b), loaded).item(), perceptual_loss(cst(a), cst(b), p1).item());
}

TEST(TvDiscrepancy, HandEnumeratedTwoByTwo) {
  // sr = [[1,2],[3,5]], hr = [[0,0],[1,0]]
  // horizontal diffs: sr (1, 2) hr (0, -1) -> |1| + |3| over 2 = 2
  // vertical diffs:   sr (2, 3) hr (1, 0)  -> |1| + |3| over 2 = 2
  const Tensor<double> sr({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 5});
  const Tensor<double> hr({1, 1, 2, 2}, std::vector<double>{0, 0, 1, 0});
  EXPECT_NEAR(tv_discrepancy_loss(cst(sr), cst(hr)).item(), 4.0, 1e-12);
}

TEST(TvDiscrepancy, TranslationInvarianceAndErrors) {
  const auto a = random_tensor({2, 3, 6, 5}, 7);
  Tensor<double> shifted = a;
  for (auto& v : shifted.values()) v += 0.3;
  EXPECT_NEAR(tv_discrepancy_loss(cst(a), cst(shifted)).item(), 0.0, 1e-12);
  EXPECT_THROW(tv_discrepancy_loss(cst(Tensor<double>({1, 1, 1, 4})), cst(Tensor<double>({1, 1, 1, 4}))), LossError);
}

TEST(StructuralLosses, RangeAndIdentity) {
  const auto a = random_tensor({1, 3, 24, 24}, 8), b = random_tensor({1, 3, 24, 24}, 9);
  EXPECT_NEAR(ssim_loss(cst(a), cst(a)).item(), 0.0, 1e-12);
  EXPECT_NEAR(msssim_loss(cst(a), cst(a)).item(), 0.0, 1e-12);
  for (double v : {ssim_loss(cst(a), cst(b)).item(), msssim_loss(cst(a), cst(b)).item()}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 2.0);
  }
}

TEST(RaGan, EqualLogitsGiveTwoLogTwo) {
  const Tensor<double> c({4, 1}, 0.7);
  EXPECT_NEAR(ragan_generator_loss(cst(c), cst(c)).item(), 2 * std::numbers::ln2, 1e-12);
  EXPECT_NEAR(ragan_discriminator_loss(cst(c), cst(c)).item(), 2 * std::numbers::ln2, 1e-12);
}

TEST(RaGan, MirrorAndDirection) {
  const auto real = random_tensor({6, 1}, 10, 1.0, 3.0), fake = random_tensor({6, 1}, 11, -3.0, -1.0);
  const double g = ragan_generator_loss(cst(real), cst(fake)).item();
  const double d = ragan_discriminator_loss(cst(real), cst(fake)).item();
  EXPECT_GT(g, d);  // discriminator is winning
  EXPECT_NEAR(ragan_generator_loss(cst(fake), cst(real)).item(), d, 1e-12);
  EXPECT_GT(d, 0.0);
  Tensor<double> bad = real;
  bad[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(ragan_generator_loss(cst(bad), cst(fake)), LossError);
}

TEST(LossGradients, EveryTermMatchesFiniteDifferences) {
  auto sr = Var<double>::parameter(random_tensor({2, 3, 16, 16}, 12));
  const auto hr = cst(random_tensor({2, 3, 16, 16}, 13));
  const auto phi = ConvFeatureExtractor<double>::fallback();
  EXPECT_LT(check_gradients([&] { return content_l1(sr, hr); }, {sr}).worst, 1e-3);
  EXPECT_LT(check_gradients([&] { return tv_discrepancy_loss(sr, hr); }, {sr}).worst, 1e-3);
  EXPECT_LT(check_gradients([&] { return perceptual_loss(sr, hr, phi); }, {sr}).worst, 1e-3);

  auto one = Var<double>::parameter(random_tensor({1, 1, 16, 16}, 14));
  const auto ref = cst(random_tensor({1, 1, 16, 16}, 15));
  EXPECT_LT(check_gradients([&] { return ssim_loss(one, ref); }, {one}).worst, 1e-3);
  EXPECT_LT(check_gradients([&] { return msssim_loss(one, ref); }, {one}).worst, 1e-3);

  auto two_scale = Var<double>::parameter(random_tensor({1, 1, 24, 24}, 16));
  const auto ref2 = cst(random_tensor({1, 1, 24, 24}, 17));
  EXPECT_LT(check_gradients([&] { return msssim_loss(two_scale, ref2); }, {two_scale}).worst, 1e-3);

  auto real = Var<double>::parameter(random_tensor({4, 1}, 18, -2, 2));
  auto fake = Var<double>::parameter(random_tensor({4, 1, 3, 3}, 19, -2, 2));
  EXPECT_LT(check_gradients([&] { return ragan_generator_loss(real, fake); }, {real, fake}).worst, 1e-4);
  EXPECT_LT(check_gradients([&] { return ragan_discriminator_loss(real, fake); }, {real, fake}).worst, 1e-4);
}

TEST(Composite, PresetArithmetic) {
  LossBreakdown ones{1, 1, 1, 1, 1, 1, 1, 0};
  EXPECT_DOUBLE_EQ(weighted_total(ones, LossWeights::standard()), 23.0);
  EXPECT_DOUBLE_EQ(weighted_total(ones, LossWeights::structural()), 24.0);
  EXPECT_DOUBLE_EQ(weighted_total(ones, LossWeights::zero()), 0.0);
}

TEST(Composite, LinearInWeightsAndZeroWhenDisabled) {
  const auto phi = ConvFeatureExtractor<double>::fallback();
  GeneratorLossInputs<double> in;
  in.sr = cst(random_tensor({2, 3, 16, 16}, 20));
  in.hr = cst(random_tensor({2, 3, 16, 16}, 21));
  in.lr = cst(random_tensor({2, 3, 4, 4}, 22));
  in.lr_rec = cst(random_tensor({2, 3, 4, 4}, 23));
  in.sr_real_logits = cst(random_tensor({2, 1}, 24));
  in.sr_fake_logits = cst(random_tensor({2, 1}, 25));
  in.phi = &phi;
  const LossWeights w = LossWeights::structural();
  const auto [t1, b1] = composite_generator_loss(in, w);
  const auto [t2, b2] = composite_generator_loss(in, w.scaled(2.0));
  EXPECT_NEAR(t2.item(), 2 * t1.item(), 1e-12);
  EXPECT_NEAR(b1.total, weighted_total(b1, w), 1e-12);
  EXPECT_EQ(b1.per, 0.0);
  const auto [t0, b0] = composite_generator_loss(in, LossWeights::zero());
  EXPECT_EQ(t0.item(), 0.0);
  EXPECT_TRUE(b0.finite());

  std::ostringstream csv;
  b1.write_csv_row(csv, 3);
  EXPECT_EQ(csv.str().substr(0, 2), "3,");
  EXPECT_EQ(std::string(LossBreakdown::kCsvHeader), "iter,l_per,l_gan,l_tv,l_l1,l_cyc,l_ssim,l_msssim,total");
}

TEST(Perceptual, IdentityFeaturesReduceToContentL1) {
  const auto a = random_tensor({2, 3, 8, 8}, 30), b = random_tensor({2, 3, 8, 8}, 31);
  const IdentityFeatures<double> id;
  EXPECT_EQ(perceptual_loss(cst(a), cst(b), id).item(), content_l1(cst(a), cst(b)).item());
  Tensor<double> offset = a;
  for (auto& v : offset.values()) v += 0.1;
  EXPECT_NEAR(content_l1(cst(offset), cst(a)).item(), 0.1, 1e-12);
}
