// Single-image noise level estimate used to size the generator's projection
// ball.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "srcyc/image.hpp"

namespace srcyc {

inline constexpr double kMaxNoiseSigma = 50.0;

/// Robust (MAD) estimate of additive white Gaussian noise std, in 8-bit units.
///
/// The finest-scale high-pass response d is the 3x3 Laplacian-difference
/// kernel [1 -2 1; -2 4 -2; 1 -2 1] divided by its l2 norm (6), evaluated on
/// the valid region of every channel. For i.i.d. noise d keeps the noise std,
/// while constant and linear regions vanish. sigma = median(|d|) / 0.6745,
/// scaled to 8-bit units and clamped to [0, 50].
inline double estimate_noise_sigma(const Image& img) {
  const int h = img.height(), w = img.width();
  if (h < 3 || w < 3) return 0.0;
  static constexpr double k[3][3] = {{1, -2, 1}, {-2, 4, -2}, {1, -2, 1}};
  std::vector<double> mags;
  mags.reserve(static_cast<std::size_t>(img.channels()) * (h - 2) * (w - 2));
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 1; y + 1 < h; ++y)
      for (int x = 1; x + 1 < w; ++x) {
        double acc = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) acc += k[dy + 1][dx + 1] * img.at(c, y + dy, x + dx);
        mags.push_back(std::abs(acc / 6.0));
      }
  auto mid = mags.begin() + static_cast<std::ptrdiff_t>(mags.size() / 2);
  std::nth_element(mags.begin(), mid, mags.end());
  double median = *mid;
  if (mags.size() % 2 == 0) median = 0.5 * (median + *std::max_element(mags.begin(), mid));
  return std::clamp(median / 0.6745 * 255.0, 0.0, kMaxNoiseSigma);
}

}  // namespace srcyc
