// Helpers shared by the unit tests and the acceptance runner.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "srcyc/srcyc.hpp"

namespace srcyc::testing {

/// Uniform random tensor in [lo, hi).
inline Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline Image random_image(int c, int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  Image img(c, h, w);
  for (double& v : img.values()) v = rng.uniform(lo, hi);
  return img;
}

struct GradCheck {
  double worst = 0.0;       // largest norm-wise relative error over the inputs
  std::size_t checked = 0;  // number of scalar entries perturbed
};

/// Compares reverse-mode gradients of the scalar f() with respect to every
/// entry of `inputs` against central differences. The error per input tensor
/// is ||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||, 1e-12).
inline GradCheck check_gradients(const std::function<Var<double>()>& f, std::vector<Var<double>> inputs,
                                 double step = 1e-6) {
  for (auto& v : inputs) {
    v.set_requires_grad(true);
    v.zero_grad();
  }
  Var<double> out = f();
  out.backward();
  GradCheck result;
  for (auto& v : inputs) {
    const Tensor<double> analytic = v.grad().empty() ? Tensor<double>(v.shape()) : v.grad();
    Tensor<double>& value = v.mutable_value();
    double diff2 = 0, a2 = 0, n2 = 0;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      double plus, minus;
      {
        NoGradGuard guard;
        value[i] = saved + step;
        plus = f().item();
        value[i] = saved - step;
        minus = f().item();
      }
      value[i] = saved;
      const double numeric = (plus - minus) / (2 * step);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
      ++result.checked;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    result.worst = std::max(result.worst, std::sqrt(diff2) / denom);
  }
  return result;
}

/// Smallest generator and LR generator used for exhaustive gradient checks.
inline GSRConfig micro_gsr() {
  GSRConfig c;
  c.feat_maps = 4;
  c.resblocks = 1;
  return c;
}

inline GLRConfig micro_glr() { return {3, 4, 1, 3, 0.2}; }

/// Scalar probe of a tensor-valued output: sum(out * weights).
inline Var<double> probe(const Var<double>& out, std::uint64_t seed) {
  return sum(mul(out, Var<double>::constant(random_tensor(out.shape(), seed, -1.0, 1.0))));
}

/// Straightforward windowed SSIM: explicit 11x11 Gaussian window loops over
/// every valid position, per channel, averaged.
inline double reference_ssim(const Image& a, const Image& b) {
  double w[11][11];
  double total = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) total += w[i][j] = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) / 4.5);
  for (auto& row : w)
    for (double& v : row) v /= total;
  const double c1 = 1e-4, c2 = 9e-4;
  double acc = 0;
  int count = 0;
  for (int c = 0; c < a.channels(); ++c) {
    double chan = 0;
    int positions = 0;
    for (int y = 0; y + 11 <= a.height(); ++y)
      for (int x = 0; x + 11 <= a.width(); ++x) {
        double mx = 0, my = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            mx += w[i][j] * a.at(c, y + i, x + j);
            my += w[i][j] * b.at(c, y + i, x + j);
          }
        double vx = 0, vy = 0, cxy = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const double dx = a.at(c, y + i, x + j) - mx, dy = b.at(c, y + i, x + j) - my;
            vx += w[i][j] * dx * dx;
            vy += w[i][j] * dy * dy;
            cxy += w[i][j] * dx * dy;
          }
        chan += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++positions;
      }
    acc += chan / positions;
    ++count;
  }
  return acc / count;
}

/// Bicubic downsampling evaluated pixel by pixel as a 2-D weighted sum over
/// the mirrored neighbourhood (no separable matrices).
inline Image reference_downsample(const Image& img, int s) {
  const int oh = img.height() / s, ow = img.width() / s;
  auto kernel = [](double x) {
    const double t = std::abs(x);
    if (t <= 1) return 1.5 * t * t * t - 2.5 * t * t + 1;
    if (t < 2) return -0.5 * t * t * t + 2.5 * t * t - 4 * t + 2;
    return 0.0;
  };
  auto mirror = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -1 - i : 2 * n - 1 - i;
    return i;
  };
  Image out(img.channels(), oh, ow);
  const double k = 1.0 / s;
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const double cy = (y + 0.5) * s - 0.5, cx = (x + 0.5) * s - 0.5;
        double acc = 0, wsum = 0;
        for (int j = static_cast<int>(std::floor(cy)) - 2 * s - 1; j <= cy + 2 * s + 1; ++j)
          for (int i = static_cast<int>(std::floor(cx)) - 2 * s - 1; i <= cx + 2 * s + 1; ++i) {
            const double wgt = kernel((cy - j) * k) * kernel((cx - i) * k);
            acc += wgt * img.at(c, mirror(j, img.height()), mirror(i, img.width()));
            wsum += wgt;
          }
        out.at(c, y, x) = acc / wsum;
      }
  return out;
}

/// Rotation by quarter turns written as transpose + row reversal, then an
/// optional column reversal; independent of apply_transform.
inline Image reference_transform(const Image& img, int quarter_turns, bool flip) {
  Image cur = img;
  for (int r = 0; r < ((quarter_turns % 4) + 4) % 4; ++r) {
    Image next(cur.channels(), cur.width(), cur.height());
    for (int c = 0; c < cur.channels(); ++c)
      for (int y = 0; y < cur.height(); ++y)
        for (int x = 0; x < cur.width(); ++x) next.at(c, cur.width() - 1 - x, y) = cur.at(c, y, x);
    cur = next;
  }
  if (flip) {
    Image next = cur;
    for (int c = 0; c < cur.channels(); ++c)
      for (int y = 0; y < cur.height(); ++y)
        for (int x = 0; x < cur.width(); ++x) next.at(c, y, cur.width() - 1 - x) = cur.at(c, y, x);
    cur = next;
  }
  return cur;
}

/// Inverse of reference_transform: undo the flip, then turn back.
inline Image reference_inverse(const Image& img, int quarter_turns, bool flip) {
  Image cur = flip ? reference_transform(img, 0, true) : img;
  return reference_transform(cur, 4 - ((quarter_turns % 4) + 4) % 4, false);
}

/// Zeroes the decoder so the generator reduces to clipped bicubic upsampling.
template <class T>
void zero_residual(SRGenerator<T>& gen) {
  for (auto [name, v] : gen.store().parameters())
    if (name.rfind("decoder.", 0) == 0) v.mutable_value().fill(T(0));
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("srcyc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace srcyc::testing
