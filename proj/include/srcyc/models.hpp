// The four networks of the cyclic SR system:
//   SRGenerator       LR -> HR (bicubic upsample, encoder, pre-activation
//                     resnet, decoder, l2-ball projection, residual
//                     subtraction, clip)
//   SRDiscriminator   HR image -> one raw logit
//   LRGenerator       HR -> LR (conv head with two stride-2 layers, resnet,
//                     conv tail, clip)
//   LRDiscriminator   LR image -> patch logit map
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "srcyc/bicubic.hpp"
#include "srcyc/layers.hpp"
#include "srcyc/noise_estimate.hpp"

namespace srcyc {

using ConfigMap = std::map<std::string, std::string>;

namespace detail {
inline int config_int(const ConfigMap& m, const std::string& key, int fallback) {
  auto it = m.find(key);
  return it == m.end() ? fallback : std::stoi(it->second);
}
inline double config_double(const ConfigMap& m, const std::string& key, double fallback) {
  auto it = m.find(key);
  return it == m.end() ? fallback : std::stod(it->second);
}
}  // namespace detail

struct GSRConfig {
  int channels = 3;
  int feat_maps = 64;
  int enc_dec_kernel = 5;
  int resblocks = 5;
  int resblock_kernel = 3;
  int scale = 4;
  double alpha_init = 2.0;

  /// Reduced width/depth for CPU smoke runs.
  static GSRConfig tiny() {
    GSRConfig c;
    c.feat_maps = 16;
    c.resblocks = 2;
    return c;
  }

  void write(ConfigMap& m, const std::string& p) const {
    m[p + "channels"] = std::to_string(channels);
    m[p + "feat_maps"] = std::to_string(feat_maps);
    m[p + "enc_dec_kernel"] = std::to_string(enc_dec_kernel);
    m[p + "resblocks"] = std::to_string(resblocks);
    m[p + "resblock_kernel"] = std::to_string(resblock_kernel);
    m[p + "scale"] = std::to_string(scale);
  }
  static GSRConfig read(const ConfigMap& m, const std::string& p) {
    GSRConfig c;
    c.channels = detail::config_int(m, p + "channels", c.channels);
    c.feat_maps = detail::config_int(m, p + "feat_maps", c.feat_maps);
    c.enc_dec_kernel = detail::config_int(m, p + "enc_dec_kernel", c.enc_dec_kernel);
    c.resblocks = detail::config_int(m, p + "resblocks", c.resblocks);
    c.resblock_kernel = detail::config_int(m, p + "resblock_kernel", c.resblock_kernel);
    c.scale = detail::config_int(m, p + "scale", c.scale);
    return c;
  }
  friend bool operator==(const GSRConfig&, const GSRConfig&) = default;
};

struct DxConfig {
  int channels = 3;
  int base_width = 64;  // widths run base x {1,1,2,2,4,4,8,8,8,8}
  double slope = 0.2;

  static DxConfig tiny() { return {3, 16, 0.2}; }

  void write(ConfigMap& m, const std::string& p) const {
    m[p + "channels"] = std::to_string(channels);
    m[p + "base_width"] = std::to_string(base_width);
  }
  static DxConfig read(const ConfigMap& m, const std::string& p) {
    DxConfig c;
    c.channels = detail::config_int(m, p + "channels", c.channels);
    c.base_width = detail::config_int(m, p + "base_width", c.base_width);
    return c;
  }
  friend bool operator==(const DxConfig&, const DxConfig&) = default;
};

struct GLRConfig {
  int channels = 3;
  int feat_maps = 64;
  int resblocks = 6;
  int kernel = 3;
  double slope = 0.2;

  static GLRConfig tiny() { return {3, 16, 2, 3, 0.2}; }

  void write(ConfigMap& m, const std::string& p) const {
    m[p + "channels"] = std::to_string(channels);
    m[p + "feat_maps"] = std::to_string(feat_maps);
    m[p + "resblocks"] = std::to_string(resblocks);
    m[p + "kernel"] = std::to_string(kernel);
  }
  static GLRConfig read(const ConfigMap& m, const std::string& p) {
    GLRConfig c;
    c.channels = detail::config_int(m, p + "channels", c.channels);
    c.feat_maps = detail::config_int(m, p + "feat_maps", c.feat_maps);
    c.resblocks = detail::config_int(m, p + "resblocks", c.resblocks);
    c.kernel = detail::config_int(m, p + "kernel", c.kernel);
    return c;
  }
  friend bool operator==(const GLRConfig&, const GLRConfig&) = default;
};

struct DyConfig {
  int channels = 3;
  int base_width = 64;  // 64 -> 128 -> 256 -> 1
  int kernel = 5;
  double slope = 0.2;

  static DyConfig tiny() { return {3, 16, 5, 0.2}; }

  void write(ConfigMap& m, const std::string& p) const {
    m[p + "channels"] = std::to_string(channels);
    m[p + "base_width"] = std::to_string(base_width);
    m[p + "kernel"] = std::to_string(kernel);
  }
  static DyConfig read(const ConfigMap& m, const std::string& p) {
    DyConfig c;
    c.channels = detail::config_int(m, p + "channels", c.channels);
    c.base_width = detail::config_int(m, p + "base_width", c.base_width);
    c.kernel = detail::config_int(m, p + "kernel", c.kernel);
    return c;
  }
  friend bool operator==(const DyConfig&, const DyConfig&) = default;
};

// ---------------------------------------------------------------------------

template <class T>
struct PreActResBlock {
  PReLU<T> act1;
  Conv2d<T> conv1;
  PReLU<T> act2;
  Conv2d<T> conv2;

  PreActResBlock() = default;
  PreActResBlock(ParameterStore<T>& s, const std::string& name, int ch, int k, Rng& rng)
      : act1(s, name + ".act1", ch),
        conv1(s, name + ".conv1", ch, ch, k, 1, k / 2, Padding::reflect, rng),
        act2(s, name + ".act2", ch),
        conv2(s, name + ".conv2", ch, ch, k, 1, k / 2, Padding::reflect, rng) {}

  Var<T> operator()(const Var<T>& x) const { return add(x, conv2(act2(conv1(act1(x))))); }
};

template <class T>
class SRGenerator : public Network<T> {
 public:
  explicit SRGenerator(const GSRConfig& cfg = {}, std::uint64_t seed = 1) : cfg_(cfg) {
    Rng rng(seed);
    auto& s = this->store_;
    const int f = cfg.feat_maps, k = cfg.enc_dec_kernel;
    encoder_ = Conv2d<T>(s, "encoder", cfg.channels, f, k, 1, k / 2, Padding::reflect, rng);
    for (int i = 0; i < cfg.resblocks; ++i)
      blocks_.emplace_back(s, "resnet." + std::to_string(i), f, cfg.resblock_kernel, rng);
    decoder_ = Conv2d<T>(s, "decoder", f, cfg.channels, k, 1, k / 2, Padding::reflect, rng);
    alpha_ = s.add_parameter("projection.alpha", Tensor<T>::scalar(static_cast<T>(cfg.alpha_init)));
  }

  const GSRConfig& config() const noexcept { return cfg_; }
  const Var<T>& alpha() const noexcept { return alpha_; }

  /// Upsampled input plus the (projected) residual it is corrected by.
  struct Trace {
    Var<T> upsampled;
    Var<T> residual;
    Var<T> output;
  };

  Trace trace(const Var<T>& lr, std::span<const double> sigma_hat) const {
    const auto& s = lr.shape();
    detail::require_4d(s, "SRGenerator");
    detail::require(s[1] == cfg_.channels, "SRGenerator: channel mismatch");
    Var<T> up = cfg_.scale == 1 ? lr : bicubic_resize(lr, s[2] * cfg_.scale, s[3] * cfg_.scale);
    Var<T> h = encoder_(up);
    for (const auto& b : blocks_) h = b(h);
    Var<T> residual = l2_ball_projection(decoder_(h), alpha_, sigma_hat);
    Var<T> out = clip(sub(up, residual), T(0), T(1));
    return {up, residual, out};
  }

  Var<T> forward(const Var<T>& lr, std::span<const double> sigma_hat) const { return trace(lr, sigma_hat).output; }

  /// Convenience overload that estimates the noise level of each input.
  Var<T> forward(const Var<T>& lr) const { return forward(lr, estimate_sigmas(lr.value())); }

  static std::vector<double> estimate_sigmas(const Tensor<T>& batch) {
    std::vector<double> sig;
    for (const Image& img : from_batch(batch)) sig.push_back(estimate_noise_sigma(img));
    return sig;
  }

 private:
  GSRConfig cfg_;
  Conv2d<T> encoder_, decoder_;
  std::vector<PreActResBlock<T>> blocks_;
  Var<T> alpha_;
};

template <class T>
class SRDiscriminator : public Network<T> {
 public:
  explicit SRDiscriminator(const DxConfig& cfg = {}, std::uint64_t seed = 2) : cfg_(cfg) {
    Rng rng(seed);
    auto& s = this->store_;
    static constexpr int mult[10] = {1, 1, 2, 2, 4, 4, 8, 8, 8, 8};
    int in = cfg.channels;
    for (int i = 0; i < 10; ++i) {
      const int out = cfg.base_width * mult[i];
      const bool strided = i % 2 == 1;
      const std::string name = "features." + std::to_string(i);
      convs_.emplace_back(s, name + ".conv", in, out, strided ? 4 : 3, strided ? 2 : 1, 1, Padding::zero, rng);
      if (i > 0) norms_.emplace_back(s, name + ".bn", out);
      in = out;
    }
    head_ = Linear<T>(s, "head", in, 1, rng);
  }

  const DxConfig& config() const noexcept { return cfg_; }

  /// One raw (pre-sigmoid) logit per image, shape [N, 1].
  Var<T> forward(const Var<T>& x) const {
    Var<T> h = x;
    const T slope = static_cast<T>(cfg_.slope);
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      h = convs_[i](h);
      if (i > 0) h = norms_[i - 1](h, this->training_);
      h = leaky_relu(h, slope);
    }
    return head_(mean_hw(h));
  }

 private:
  DxConfig cfg_;
  std::vector<Conv2d<T>> convs_;
  std::vector<BatchNorm2d<T>> norms_;
  Linear<T> head_;
};

template <class T>
struct ResBlock {
  Conv2d<T> conv1, conv2;
  T slope = T(0.2);

  ResBlock() = default;
  ResBlock(ParameterStore<T>& s, const std::string& name, int ch, int k, T slope_, Rng& rng)
      : conv1(s, name + ".conv1", ch, ch, k, 1, k / 2, Padding::reflect, rng),
        conv2(s, name + ".conv2", ch, ch, k, 1, k / 2, Padding::reflect, rng),
        slope(slope_) {}

  Var<T> operator()(const Var<T>& x) const { return add(x, conv2(leaky_relu(conv1(x), slope))); }
};

template <class T>
class LRGenerator : public Network<T> {
 public:
  static constexpr int kFactor = 4;

  explicit LRGenerator(const GLRConfig& cfg = {}, std::uint64_t seed = 3) : cfg_(cfg) {
    Rng rng(seed);
    auto& s = this->store_;
    const int f = cfg.feat_maps, k = cfg.kernel, p = k / 2;
    const T slope = static_cast<T>(cfg.slope);
    head_.emplace_back(s, "head.0", cfg.channels, f, k, 1, p, Padding::reflect, rng);
    head_.emplace_back(s, "head.1", f, f, k, 2, p, Padding::reflect, rng);
    head_.emplace_back(s, "head.2", f, f, k, 2, p, Padding::reflect, rng);
    for (int i = 0; i < cfg.resblocks; ++i) blocks_.emplace_back(s, "resnet." + std::to_string(i), f, k, slope, rng);
    tail_.emplace_back(s, "tail.0", f, f, k, 1, p, Padding::reflect, rng);
    tail_.emplace_back(s, "tail.1", f, f, k, 1, p, Padding::reflect, rng);
    tail_.emplace_back(s, "tail.2", f, cfg.channels, k, 1, p, Padding::reflect, rng);
  }

  const GLRConfig& config() const noexcept { return cfg_; }

  Var<T> forward(const Var<T>& hr) const {
    const auto& s = hr.shape();
    detail::require_4d(s, "LRGenerator");
    detail::require(s[2] % kFactor == 0 && s[3] % kFactor == 0,
                    "LRGenerator: spatial dims of " + to_string(s) + " must be divisible by 4");
    const T slope = static_cast<T>(cfg_.slope);
    Var<T> h = hr;
    for (const auto& c : head_) h = leaky_relu(c(h), slope);
    for (const auto& b : blocks_) h = b(h);
    h = leaky_relu(tail_[0](h), slope);
    h = leaky_relu(tail_[1](h), slope);
    return clip(tail_[2](h), T(0), T(1));
  }

 private:
  GLRConfig cfg_;
  std::vector<Conv2d<T>> head_, tail_;
  std::vector<ResBlock<T>> blocks_;
};

template <class T>
class LRDiscriminator : public Network<T> {
 public:
  explicit LRDiscriminator(const DyConfig& cfg = {}, std::uint64_t seed = 4) : cfg_(cfg) {
    Rng rng(seed);
    auto& s = this->store_;
    const int k = cfg.kernel, p = k / 2;
    const int widths[3] = {cfg.base_width, 2 * cfg.base_width, 4 * cfg.base_width};
    static constexpr int strides[3] = {2, 2, 1};
    int in = cfg.channels;
    for (int i = 0; i < 3; ++i) {
      const std::string name = "features." + std::to_string(i);
      convs_.emplace_back(s, name + ".conv", in, widths[i], k, strides[i], p, Padding::zero, rng);
      norms_.emplace_back(s, name + ".bn", widths[i]);
      in = widths[i];
    }
    out_ = Conv2d<T>(s, "output", in, 1, k, 1, p, Padding::zero, rng);
  }

  const DyConfig& config() const noexcept { return cfg_; }

  /// Patch logit map, shape [N, 1, h', w'].
  Var<T> forward(const Var<T>& x) const {
    Var<T> h = x;
    const T slope = static_cast<T>(cfg_.slope);
    for (std::size_t i = 0; i < convs_.size(); ++i) h = leaky_relu(norms_[i](convs_[i](h), this->training_), slope);
    return out_(h);
  }

 private:
  DyConfig cfg_;
  std::vector<Conv2d<T>> convs_;
  std::vector<BatchNorm2d<T>> norms_;
  Conv2d<T> out_;
};

}  // namespace srcyc
