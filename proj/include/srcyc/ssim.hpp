// Structural similarity (SSIM) and its multi-scale variant, written with the
// differentiable ops so the same code serves as a metric and as a loss.
//
// Gaussian window 11x11, sigma 1.5, valid filtering, C1 = 0.01^2 and
// C2 = 0.03^2 for unit peak. Each channel is scored separately and the scores
// are averaged.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "srcyc/ops.hpp"

namespace srcyc {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr std::array<double, 5> kMsSsimWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

/// Normalized 1-D Gaussian; the 2-D window is its outer product.
inline std::vector<double> gaussian_window(int size = kSsimWindow, double sigma = kSsimSigma) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) total += g[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
  for (double& v : g) v /= total;
  return g;
}

/// Number of MS-SSIM scales usable for an h x w input: halving (ceil) until
/// the smaller side would drop under the window size, capped at five. A
/// 161-pixel side is the smallest that admits all five.
inline int ms_ssim_scales(int h, int w) {
  int m = 0;
  int side = std::min(h, w);
  while (m < static_cast<int>(kMsSsimWeights.size()) && side >= kSsimWindow) {
    ++m;
    side = (side + 1) / 2;
  }
  return m;
}

template <class T>
struct SsimMaps {
  Var<T> ssim;  // [N, C] mean SSIM per channel
  Var<T> cs;    // [N, C] mean contrast-structure term per channel
};

template <class T>
SsimMaps<T> ssim_components(const Var<T>& x, const Var<T>& y) {
  x.value().check_same_shape(y.value(), "ssim");
  detail::require_4d(x.shape(), "ssim");
  detail::require(x.shape()[2] >= kSsimWindow && x.shape()[3] >= kSsimWindow,
                  "ssim: images must be at least 11x11, got " + to_string(x.shape()));
  static const std::vector<T> g = [] {
    std::vector<T> out;
    for (double v : gaussian_window()) out.push_back(static_cast<T>(v));
    return out;
  }();
  auto blur = [&](const Var<T>& v) { return filter1d_valid<T>(filter1d_valid<T>(v, g, 3), g, 2); };
  const T c1 = static_cast<T>(kSsimC1), c2 = static_cast<T>(kSsimC2);

  Var<T> mu_x = blur(x), mu_y = blur(y);
  Var<T> mu_xx = mul(mu_x, mu_x), mu_yy = mul(mu_y, mu_y), mu_xy = mul(mu_x, mu_y);
  Var<T> s_xx = sub(blur(mul(x, x)), mu_xx);
  Var<T> s_yy = sub(blur(mul(y, y)), mu_yy);
  Var<T> s_xy = sub(blur(mul(x, y)), mu_xy);

  Var<T> cs_map = div(add_const(mul_const(s_xy, T(2)), c2), add_const(add(s_xx, s_yy), c2));
  Var<T> l_map = div(add_const(mul_const(mu_xy, T(2)), c1), add_const(add(mu_xx, mu_yy), c1));
  return {mean_hw(mul(l_map, cs_map)), mean_hw(cs_map)};
}

/// Mean SSIM over batch and channels.
template <class T>
Var<T> ssim(const Var<T>& x, const Var<T>& y) {
  return mean(ssim_components(x, y).ssim);
}

/// Multi-scale SSIM with the canonical five weights; when fewer scales fit,
/// the leading weights are used and renormalized to sum to one. Negative
/// per-scale terms are clamped to zero before exponentiation.
template <class T>
Var<T> ms_ssim(const Var<T>& x, const Var<T>& y) {
  x.value().check_same_shape(y.value(), "ms_ssim");
  detail::require_4d(x.shape(), "ms_ssim");
  const int scales = ms_ssim_scales(x.shape()[2], x.shape()[3]);
  detail::require(scales >= 1, "ms_ssim: images must be at least 11x11, got " + to_string(x.shape()));
  double wsum = 0.0;
  for (int j = 0; j < scales; ++j) wsum += kMsSsimWeights[j];

  Var<T> a = x, b = y;
  Var<T> product;
  for (int j = 0; j < scales; ++j) {
    SsimMaps<T> m = ssim_components(a, b);
    const bool last = j == scales - 1;
    Var<T> term = pow_const(relu(last ? m.ssim : m.cs), static_cast<T>(kMsSsimWeights[j] / wsum));
    product = j == 0 ? term : mul(product, term);
    if (!last) {
      a = avg_pool2(a);
      b = avg_pool2(b);
    }
  }
  return mean(product);
}

}  // namespace srcyc
