// Image value type, geometric transforms, patch sampling, and conversions to
// network batches.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "srcyc/random.hpp"
#include "srcyc/tensor.hpp"

namespace srcyc {

class ImageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// C x H x W image with real-valued samples; [0, 1] is the displayable range.
class Image {
 public:
  Image() = default;

  Image(int channels, int height, int width, double fill = 0.0)
      : c_(channels), h_(height), w_(width) {
    validate();
    data_.assign(static_cast<std::size_t>(c_) * h_ * w_, fill);
  }

  Image(int channels, int height, int width, std::vector<double> data)
      : c_(channels), h_(height), w_(width), data_(std::move(data)) {
    validate();
    if (data_.size() != static_cast<std::size_t>(c_) * h_ * w_)
      throw ImageError("image data size does not match " + shape_string());
  }

  int channels() const noexcept { return c_; }
  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& at(int c, int y, int x) noexcept { return data_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x]; }
  double at(int c, int y, int x) const noexcept { return data_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool same_shape(const Image& o) const noexcept { return c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }

  std::string shape_string() const {
    return std::to_string(c_) + "x" + std::to_string(h_) + "x" + std::to_string(w_);
  }

  friend bool operator==(const Image& a, const Image& b) = default;

 private:
  void validate() const {
    if (c_ != 1 && c_ != 3) throw ImageError("image must have 1 or 3 channels, got " + std::to_string(c_));
    if (h_ < 1 || w_ < 1) throw ImageError("image dimensions must be positive, got " + shape_string());
  }

  int c_ = 0, h_ = 0, w_ = 0;
  std::vector<double> data_;
};

inline Image clip(Image img) {
  for (double& v : img.values()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

inline bool in_unit_range(const Image& img) {
  return std::all_of(img.values().begin(), img.values().end(),
                     [](double v) { return v >= 0.0 && v <= 1.0; });
}

inline bool all_finite(const Image& img) {
  return std::all_of(img.values().begin(), img.values().end(), [](double v) { return std::isfinite(v); });
}

inline Image crop(const Image& img, int y0, int x0, int height, int width) {
  if (y0 < 0 || x0 < 0 || y0 + height > img.height() || x0 + width > img.width())
    throw ImageError("crop window outside image " + img.shape_string());
  Image out(img.channels(), height, width);
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
  return out;
}

// ---------------------------------------------------------------------------
// Dihedral transforms

/// Counter-clockwise quarter turns followed by an optional horizontal flip.
struct GeomTransform {
  int rotation = 0;
  bool hflip = false;

  friend bool operator==(const GeomTransform&, const GeomTransform&) = default;
};

/// All eight transforms in the fixed order used by self-ensembling.
inline constexpr std::array<GeomTransform, 8> all_transforms() {
  return {GeomTransform{0, false}, GeomTransform{1, false}, GeomTransform{2, false}, GeomTransform{3, false},
          GeomTransform{0, true},  GeomTransform{1, true},  GeomTransform{2, true},  GeomTransform{3, true}};
}

/// Flipping elements are involutions; pure rotations invert by turning back.
inline constexpr GeomTransform inverse(GeomTransform t) {
  if (t.hflip) return t;
  return {(4 - t.rotation % 4) % 4, false};
}

inline Image apply_transform(const Image& img, GeomTransform t) {
  const int r = ((t.rotation % 4) + 4) % 4;
  const int h = img.height(), w = img.width();
  const int oh = (r % 2) ? w : h, ow = (r % 2) ? h : w;
  Image out(img.channels(), oh, ow);
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const int xs = t.hflip ? ow - 1 - x : x;
        int sy = 0, sx = 0;
        switch (r) {
          case 0: sy = y; sx = xs; break;
          case 1: sy = xs; sx = w - 1 - y; break;
          case 2: sy = h - 1 - y; sx = w - 1 - xs; break;
          default: sy = h - 1 - xs; sx = y; break;
        }
        out.at(c, y, x) = img.at(c, sy, sx);
      }
  return out;
}

// ---------------------------------------------------------------------------
// Patch sampling

struct PatchPair {
  Image lr;
  Image hr;
};

/// Samples an aligned (lr, hr) patch pair at a uniformly random LR offset; the
/// HR window sits at scale times that offset.
inline PatchPair extract_patch_pair(const Image& hr, const Image& lr, int lr_size, int scale, Rng& rng) {
  if (scale < 1) throw ImageError("scale must be >= 1");
  if (hr.channels() != lr.channels() || hr.height() != scale * lr.height() || hr.width() != scale * lr.width())
    throw ImageError("hr " + hr.shape_string() + " is not " + std::to_string(scale) + "x lr " + lr.shape_string());
  if (lr_size < 1 || lr_size > std::min(lr.height(), lr.width()))
    throw ImageError("patch size " + std::to_string(lr_size) + " does not fit lr " + lr.shape_string());
  const int oy = rng.uniform_int(0, lr.height() - lr_size);
  const int ox = rng.uniform_int(0, lr.width() - lr_size);
  return {crop(lr, oy, ox, lr_size, lr_size), crop(hr, oy * scale, ox * scale, lr_size * scale, lr_size * scale)};
}

inline PatchPair extract_patch_pair(const Image& hr, const Image& lr, int lr_size, int scale, std::uint64_t seed) {
  Rng rng(seed);
  return extract_patch_pair(hr, lr, lr_size, scale, rng);
}

// ---------------------------------------------------------------------------
// Batch conversion

template <class T>
Tensor<T> to_batch(std::span<const Image> images) {
  if (images.empty()) throw ImageError("empty image batch");
  const Image& first = images.front();
  Tensor<T> out(Shape{static_cast<int>(images.size()), first.channels(), first.height(), first.width()});
  std::size_t off = 0;
  for (const Image& img : images) {
    if (!img.same_shape(first)) throw ImageError("batch images differ in shape");
    for (double v : img.values()) out[off++] = static_cast<T>(v);
  }
  return out;
}

template <class T>
Tensor<T> to_batch(const Image& img) {
  return to_batch<T>(std::span<const Image>(&img, 1));
}

template <class T>
std::vector<Image> from_batch(const Tensor<T>& t) {
  if (t.ndim() != 4) throw ShapeError("from_batch expects NCHW, got " + to_string(t.shape()));
  const int n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
  const std::size_t per = static_cast<std::size_t>(c) * h * w;
  std::vector<Image> out;
  out.reserve(n);
  for (int b = 0; b < n; ++b) {
    std::vector<double> data(per);
    for (std::size_t i = 0; i < per; ++i) data[i] = static_cast<double>(t[b * per + i]);
    out.emplace_back(c, h, w, std::move(data));
  }
  return out;
}

}  // namespace srcyc
