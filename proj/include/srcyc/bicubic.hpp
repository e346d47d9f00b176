// Bicubic resampling (Keys kernel, a = -0.5) in the imresize convention:
// pixel centers aligned, symmetric boundary extension, and an anti-aliasing
// kernel stretched by the reduction factor when shrinking.
#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <utility>

#include "srcyc/image.hpp"
#include "srcyc/ops.hpp"

namespace srcyc {

inline constexpr double kBicubicA = -0.5;

inline double cubic_kernel(double x, double a = kBicubicA) {
  const double t = std::abs(x);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

/// Index reflection with edge repetition: -1 -> 0, n -> n-1.
inline int symmetric_index(int i, int n) {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

/// Dense out_size x in_size matrix R such that out = R * in along one axis.
inline RowMatrix<double> bicubic_matrix(int in_size, int out_size) {
  const double scale = static_cast<double>(out_size) / in_size;
  const double kscale = scale < 1.0 ? scale : 1.0;  // anti-aliasing stretch
  const double support = 4.0 / kscale;
  RowMatrix<double> r = RowMatrix<double>::Zero(out_size, in_size);
  for (int i = 0; i < out_size; ++i) {
    const double u = (i + 0.5) / scale - 0.5;
    const int left = static_cast<int>(std::floor(u - support / 2.0));
    const int taps = static_cast<int>(std::ceil(support)) + 2;
    double total = 0.0;
    for (int t = 0; t < taps; ++t) {
      const int j = left + t;
      const double wgt = cubic_kernel((u - j) * kscale) * kscale;
      if (wgt == 0.0) continue;
      r(i, symmetric_index(j, in_size)) += wgt;
      total += wgt;
    }
    r.row(i) /= total;
  }
  return r;
}

/// Shared, cached resampling matrix in scalar type T.
template <class T>
std::shared_ptr<const RowMatrix<T>> bicubic_matrix_cached(int in_size, int out_size) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::shared_ptr<const RowMatrix<T>>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[{in_size, out_size}];
  if (!slot) slot = std::make_shared<const RowMatrix<T>>(bicubic_matrix(in_size, out_size).cast<T>());
  return slot;
}

/// Differentiable resize of an NCHW batch to (out_h, out_w).
template <class T>
Var<T> bicubic_resize(const Var<T>& x, int out_h, int out_w) {
  const auto& s = x.shape();
  detail::require_4d(s, "bicubic_resize");
  return resample(x, bicubic_matrix_cached<T>(s[2], out_h), bicubic_matrix_cached<T>(s[3], out_w));
}

inline Image bicubic_resize(const Image& img, int out_h, int out_w) {
  const RowMatrix<double> rh = bicubic_matrix(img.height(), out_h);
  const RowMatrix<double> rw = bicubic_matrix(img.width(), out_w);
  Image out(img.channels(), out_h, out_w);
  for (int c = 0; c < img.channels(); ++c) {
    Eigen::Map<const RowMatrix<double>> in(img.values().data() + static_cast<std::size_t>(c) * img.height() * img.width(),
                                           img.height(), img.width());
    Eigen::Map<RowMatrix<double>> o(out.values().data() + static_cast<std::size_t>(c) * out_h * out_w, out_h, out_w);
    o.noalias() = rh * in * rw.transpose();
  }
  return out;
}

/// Reduces each spatial dimension by the integer factor s. Output is not
/// clipped: bicubic overshoot can leave [0, 1].
inline Image bicubic_downsample(const Image& img, int s) {
  if (s < 1) throw ImageError("scale must be >= 1");
  if (img.height() % s || img.width() % s)
    throw ImageError("image " + img.shape_string() + " not divisible by scale " + std::to_string(s));
  if (s == 1) return img;
  return bicubic_resize(img, img.height() / s, img.width() / s);
}

inline Image bicubic_upsample(const Image& img, int s) {
  if (s < 1) throw ImageError("scale must be >= 1");
  if (s == 1) return img;
  return bicubic_resize(img, img.height() * s, img.width() * s);
}

}  // namespace srcyc
