// 8-bit PNG read/write.
//
// Load maps each byte b to b / 255. Save quantizes each sample v to
// round(v * 255) and rejects values outside [0, 1], so callers clip first.
#pragma once

#include <png.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "srcyc/image.hpp"

namespace srcyc {

enum class ImageIoErrc {
  file_not_found,
  not_png,
  unsupported_bit_depth,
  unsupported_color_type,
  decode_failed,
  out_of_range,
  write_failed,
};

inline const char* describe(ImageIoErrc e) {
  switch (e) {
    case ImageIoErrc::file_not_found: return "file not found";
    case ImageIoErrc::not_png: return "not a PNG file";
    case ImageIoErrc::unsupported_bit_depth: return "unsupported bit depth (only 8-bit PNG is supported)";
    case ImageIoErrc::unsupported_color_type: return "unsupported color type (only RGB or grayscale)";
    case ImageIoErrc::decode_failed: return "PNG decode failed";
    case ImageIoErrc::out_of_range: return "sample outside [0,1]; clip before saving";
    case ImageIoErrc::write_failed: return "PNG write failed";
  }
  return "unknown image I/O error";
}

class ImageIoError : public std::runtime_error {
 public:
  ImageIoError(ImageIoErrc code, const std::string& path, const std::string& detail = {})
      : std::runtime_error(path + ": " + describe(code) + (detail.empty() ? "" : " (" + detail + ")")),
        code_(code) {}
  ImageIoErrc code() const noexcept { return code_; }

 private:
  ImageIoErrc code_;
};

namespace detail {

// Reads bit depth and color type straight from the IHDR chunk so that
// low-bit, 16-bit, palette and alpha files are rejected before libpng
// would silently convert them.
inline void check_png_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::array<unsigned char, 29> head{};
  in.read(reinterpret_cast<char*>(head.data()), head.size());
  static constexpr std::array<unsigned char, 8> signature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (in.gcount() < static_cast<std::streamsize>(head.size()) ||
      !std::equal(signature.begin(), signature.end(), head.begin()) ||
      std::string(reinterpret_cast<const char*>(head.data()) + 12, 4) != "IHDR")
    throw ImageIoError(ImageIoErrc::not_png, path.string());
  const int bit_depth = head[24];
  const int color_type = head[25];
  if (bit_depth != 8) throw ImageIoError(ImageIoErrc::unsupported_bit_depth, path.string(), std::to_string(bit_depth) + "-bit");
  if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_RGB)
    throw ImageIoError(ImageIoErrc::unsupported_color_type, path.string(), "color type " + std::to_string(color_type));
}

}  // namespace detail

inline Image load_image(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw ImageIoError(ImageIoErrc::file_not_found, path.string());
  detail::check_png_header(path);

  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str()))
    throw ImageIoError(ImageIoErrc::decode_failed, path.string(), png.message);
  const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
  png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&png);
    throw ImageIoError(ImageIoErrc::decode_failed, path.string(), png.message);
  }
  const int c = gray ? 1 : 3;
  const int h = static_cast<int>(png.height), w = static_cast<int>(png.width);
  Image img(c, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        img.at(ch, y, x) = buf[(static_cast<std::size_t>(y) * w + x) * c + ch] / 255.0;
  return img;
}

/// The 8-bit code for a sample in [0, 1]: round(v * 255).
inline std::uint8_t quantize8(double v) { return static_cast<std::uint8_t>(std::lround(v * 255.0)); }

inline void save_image(const Image& img, const std::filesystem::path& path) {
  for (double v : img.values())
    if (!(v >= 0.0 && v <= 1.0)) throw ImageIoError(ImageIoErrc::out_of_range, path.string());
  const int c = img.channels(), h = img.height(), w = img.width();
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(c) * h * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) buf[(static_cast<std::size_t>(y) * w + x) * c + ch] = quantize8(img.at(ch, y, x));

  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(w);
  png.height = static_cast<png_uint_32>(h);
  png.format = c == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, buf.data(), 0, nullptr))
    throw ImageIoError(ImageIoErrc::write_failed, path.string(), png.message);
}

}  // namespace srcyc
