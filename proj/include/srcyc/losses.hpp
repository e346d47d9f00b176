// Training objectives for the generators and discriminators.
#pragma once

#include <cmath>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "srcyc/checkpoint.hpp"
#include "srcyc/layers.hpp"
#include "srcyc/ssim.hpp"

namespace srcyc {

class LossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Feature extractors for the perceptual term

template <class T>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string name() const = 0;
  virtual bool available() const { return true; }
  virtual Var<T> operator()(const Var<T>& x) const = 0;
};

template <class T>
class IdentityFeatures final : public FeatureExtractor<T> {
 public:
  std::string name() const override { return "identity"; }
  Var<T> operator()(const Var<T>& x) const override { return x; }
};

/// Frozen three-stage convolution stack:
///   conv3x3(C->16) ReLU, conv3x3/2(16->32) ReLU, conv3x3/2(32->64)
/// with zero padding 1. Features are taken before the last activation.
///
/// The fallback weights are drawn from Rng(0) in layer order (weight then
/// bias) as Uniform(+-1/sqrt(fan_in)), so every build derives the same stack.
/// Pretrained weights can be supplied as a checkpoint holding
/// stage{0,1,2}.weight / .bias tensors.
template <class T>
class ConvFeatureExtractor final : public FeatureExtractor<T> {
 public:
  static constexpr int kWidths[3] = {16, 32, 64};

  static ConvFeatureExtractor fallback(int channels = 3) { return ConvFeatureExtractor(channels); }

  /// Missing file yields an unavailable extractor; perceptual_loss refuses it.
  static ConvFeatureExtractor from_file(const std::filesystem::path& path, int channels = 3) {
    ConvFeatureExtractor fx(channels);
    fx.name_ = "conv3:" + path.string();
    if (!std::filesystem::exists(path)) {
      fx.available_ = false;
      return fx;
    }
    const Checkpoint ck = Checkpoint::load(path);
    for (int i = 0; i < 3; ++i) {
      const std::string p = "stage" + std::to_string(i);
      fx.stages_[i].weight.mutable_value() = ck.get(p + ".weight").template as<T>();
      fx.stages_[i].bias.mutable_value() = ck.get(p + ".bias").template as<T>();
    }
    return fx;
  }

  std::string name() const override { return name_; }
  bool available() const override { return available_; }

  Var<T> operator()(const Var<T>& x) const override {
    Var<T> h = relu(stages_[0](x));
    h = relu(stages_[1](h));
    return stages_[2](h);
  }

 private:
  explicit ConvFeatureExtractor(int channels) {
    Rng rng(0);
    ParameterStore<T> scratch;
    int in = channels;
    for (int i = 0; i < 3; ++i) {
      stages_[i] = Conv2d<T>(scratch, "stage" + std::to_string(i), in, kWidths[i], 3, i == 0 ? 1 : 2, 1,
                             Padding::zero, rng);
      stages_[i].weight.set_requires_grad(false);
      stages_[i].bias.set_requires_grad(false);
      in = kWidths[i];
    }
  }

  Conv2d<T> stages_[3];
  std::string name_ = "conv3-fallback-seed0";
  bool available_ = true;
};

// ---------------------------------------------------------------------------
// Individual terms

/// Mean absolute error over every element of the batch.
template <class T>
Var<T> content_l1(const Var<T>& sr, const Var<T>& hr) {
  return mean(abs(sub(sr, hr)));
}

template <class T>
Var<T> perceptual_loss(const Var<T>& sr, const Var<T>& hr, const FeatureExtractor<T>& phi) {
  if (!phi.available())
    throw LossError("feature extractor '" + phi.name() +
                    "' is unavailable (weights not found); select the fallback extractor "
                    "(ConvFeatureExtractor::fallback) instead");
  sr.value().check_same_shape(hr.value(), "perceptual_loss");
  return content_l1(phi(sr), phi(hr));
}

/// Sum of the mean absolute discrepancies of the horizontal and vertical
/// forward-difference maps (valid region, no wrap-around).
template <class T>
Var<T> tv_discrepancy_loss(const Var<T>& sr, const Var<T>& hr) {
  sr.value().check_same_shape(hr.value(), "tv_discrepancy_loss");
  const auto& s = sr.shape();
  if (s.size() != 4 || s[2] < 2 || s[3] < 2)
    throw LossError("tv_discrepancy_loss needs spatial dims >= 2, got " + to_string(s));
  Var<T> dh = content_l1(forward_diff(sr, 3), forward_diff(hr, 3));
  Var<T> dv = content_l1(forward_diff(sr, 2), forward_diff(hr, 2));
  return add(dh, dv);
}

/// L1 between the reconstructed LR image G_LR(G_SR(y)) and y.
template <class T>
Var<T> cyclic_loss(const Var<T>& y_rec, const Var<T>& y) {
  return content_l1(y_rec, y);
}

template <class T>
Var<T> ssim_loss(const Var<T>& sr, const Var<T>& hr) {
  return add_const(mul_const(ssim(sr, hr), T(-1)), T(1));
}

template <class T>
Var<T> msssim_loss(const Var<T>& sr, const Var<T>& hr) {
  return add_const(mul_const(ms_ssim(sr, hr), T(-1)), T(1));
}

namespace detail {
template <class T>
void require_finite_logits(const Var<T>& v, const char* what) {
  if (v.value().empty()) throw LossError(std::string(what) + ": empty logit set");
  for (T x : v.value().values())
    if (!std::isfinite(x)) throw LossError(std::string(what) + ": non-finite logit");
}

// E_a[softplus(-(a - mean b))] + E_b[softplus(b - mean a)], i.e.
// -E[log sigma(a - E b)] - E[log(1 - sigma(b - E a))].
template <class T>
Var<T> relativistic_pair(const Var<T>& favored, const Var<T>& other) {
  Var<T> t1 = mean(softplus(mul_const(sub_scalar(favored, mean(other)), T(-1))));
  Var<T> t2 = mean(softplus(sub_scalar(other, mean(favored))));
  return add(t1, t2);
}
}  // namespace detail

/// Relativistic-average generator loss:
///   -E_x[log(1 - sigma(C(x) - E C(fake)))] - E_fake[log sigma(C(fake) - E C(x))]
/// Logit tensors of any shape are treated as flat sample sets, so patch maps
/// average over batch and position jointly.
template <class T>
Var<T> ragan_generator_loss(const Var<T>& c_real, const Var<T>& c_fake) {
  detail::require_finite_logits(c_real, "ragan_generator_loss");
  detail::require_finite_logits(c_fake, "ragan_generator_loss");
  return detail::relativistic_pair(c_fake, c_real);
}

/// Mirror of the generator loss with real and fake roles swapped.
template <class T>
Var<T> ragan_discriminator_loss(const Var<T>& c_real, const Var<T>& c_fake) {
  detail::require_finite_logits(c_real, "ragan_discriminator_loss");
  detail::require_finite_logits(c_fake, "ragan_discriminator_loss");
  return detail::relativistic_pair(c_real, c_fake);
}

// ---------------------------------------------------------------------------
// Composite objective

struct LossWeights {
  double per = 1, gan = 1, tv = 1, l1 = 10, cyc = 10, ssim = 0, msssim = 0;

  /// L_per + L_GAN + L_tv + 10 L_1 + 10 L_cyc
  static constexpr LossWeights standard() { return {1, 1, 1, 10, 10, 0, 0}; }
  /// L_GAN + L_tv + 10 L_1 + L_ssim + L_msssim + 10 L_cyc
  static constexpr LossWeights structural() { return {0, 1, 1, 10, 10, 1, 1}; }
  static constexpr LossWeights zero() { return {0, 0, 0, 0, 0, 0, 0}; }

  LossWeights scaled(double k) const { return {per * k, gan * k, tv * k, l1 * k, cyc * k, ssim * k, msssim * k}; }
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Unweighted term values plus the weighted total, as logged per iteration.
struct LossBreakdown {
  double per = 0, gan = 0, tv = 0, l1 = 0, cyc = 0, ssim = 0, msssim = 0, total = 0;

  static constexpr const char* kCsvHeader = "iter,l_per,l_gan,l_tv,l_l1,l_cyc,l_ssim,l_msssim,total";

  bool finite() const {
    for (double v : {per, gan, tv, l1, cyc, ssim, msssim, total})
      if (!std::isfinite(v)) return false;
    return true;
  }

  void write_csv_row(std::ostream& os, long long iter) const {
    os << iter << ',' << per << ',' << gan << ',' << tv << ',' << l1 << ',' << cyc << ',' << ssim << ',' << msssim
       << ',' << total << '\n';
  }

  std::string describe() const {
    std::ostringstream os;
    os << "l_per=" << per << " l_gan=" << gan << " l_tv=" << tv << " l_l1=" << l1 << " l_cyc=" << cyc
       << " l_ssim=" << ssim << " l_msssim=" << msssim << " total=" << total;
    return os.str();
  }
};

/// Weighted sum of term values; linear in the weights.
inline double weighted_total(const LossBreakdown& b, const LossWeights& w) {
  return w.per * b.per + w.gan * b.gan + w.tv * b.tv + w.l1 * b.l1 + w.cyc * b.cyc + w.ssim * b.ssim +
         w.msssim * b.msssim;
}

/// Everything one generator update needs to evaluate its objective.
template <class T>
struct GeneratorLossInputs {
  Var<T> sr;                            // G_SR(y)
  Var<T> hr;                            // x
  std::optional<Var<T>> lr;             // y (cyclic path)
  std::optional<Var<T>> lr_rec;         // G_LR(G_SR(y)) (cyclic path)
  std::optional<Var<T>> sr_real_logits, sr_fake_logits;  // D_x(x), D_x(sr)
  std::optional<Var<T>> lr_real_logits, lr_fake_logits;  // D_y(y), D_y(lr_rec)
  const FeatureExtractor<T>* phi = nullptr;
};

/// Weighted generator objective. Terms with zero weight are skipped and
/// logged as 0. The adversarial term sums the SR-side RaGAN loss and, when LR
/// logits are supplied, the LR-side one.
template <class T>
std::pair<Var<T>, LossBreakdown> composite_generator_loss(const GeneratorLossInputs<T>& in, const LossWeights& w) {
  LossBreakdown b;
  Var<T> total(Tensor<T>::scalar(T(0)));
  auto accumulate = [&](double weight, const Var<T>& term, double& slot) {
    slot = static_cast<double>(term.item());
    total = add(total, mul_const(term, static_cast<T>(weight)));
  };
  if (w.per > 0) {
    if (!in.phi) throw LossError("perceptual term requested without a feature extractor");
    accumulate(w.per, perceptual_loss(in.sr, in.hr, *in.phi), b.per);
  }
  if (w.gan > 0 && in.sr_real_logits && in.sr_fake_logits) {
    Var<T> g = ragan_generator_loss(*in.sr_real_logits, *in.sr_fake_logits);
    if (in.lr_real_logits && in.lr_fake_logits) g = add(g, ragan_generator_loss(*in.lr_real_logits, *in.lr_fake_logits));
    accumulate(w.gan, g, b.gan);
  }
  if (w.tv > 0) accumulate(w.tv, tv_discrepancy_loss(in.sr, in.hr), b.tv);
  if (w.l1 > 0) accumulate(w.l1, content_l1(in.sr, in.hr), b.l1);
  if (w.cyc > 0 && in.lr && in.lr_rec) accumulate(w.cyc, cyclic_loss(*in.lr_rec, *in.lr), b.cyc);
  if (w.ssim > 0) accumulate(w.ssim, ssim_loss(in.sr, in.hr), b.ssim);
  if (w.msssim > 0) accumulate(w.msssim, msssim_loss(in.sr, in.hr), b.msssim);
  b.total = static_cast<double>(total.item());
  return {total, b};
}

}  // namespace srcyc
