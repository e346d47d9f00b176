// Synthetic observation model y = D_s(x) + n, optionally JPEG-compressed.
//
// Stages run in a fixed order: bicubic downsampling, additive Gaussian sensor
// noise (clipped to [0,1]), then a JPEG encode/decode round trip.
#pragma once

#include <jpeglib.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "srcyc/bicubic.hpp"
#include "srcyc/image.hpp"
#include "srcyc/image_io.hpp"
#include "srcyc/random.hpp"

namespace srcyc {

class DegradationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DegradationSpec {
  int scale = 4;
  double noise_sigma = 0.0;          // 8-bit units: 8 means std 8/255
  std::optional<int> jpeg_quality;   // nullopt = no compression
  std::uint64_t seed = 0;

  void validate() const {
    if (scale < 1 || scale > 4) throw DegradationError("scale must be in {1,2,3,4}");
    if (!(noise_sigma >= 0.0)) throw DegradationError("noise sigma must be >= 0");
    if (jpeg_quality && (*jpeg_quality < 1 || *jpeg_quality > 100))
      throw DegradationError("JPEG quality must be in [1,100]");
  }
};

inline Image add_sensor_noise(const Image& img, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw DegradationError("noise sigma must be >= 0");
  if (sigma == 0.0) return img;
  Image out = img;
  const double std_dev = sigma / 255.0;
  for (double& v : out.values()) v = std::clamp(v + std_dev * rng.normal(), 0.0, 1.0);
  return out;
}

inline Image add_sensor_noise(const Image& img, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  return add_sensor_noise(img, sigma, rng);
}

namespace detail {

struct JpegErrorManager {
  jpeg_error_mgr base;
  char message[JMSG_LENGTH_MAX];
};

[[noreturn]] inline void jpeg_throw(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, mgr->message);
  throw DegradationError(std::string("libjpeg: ") + mgr->message);
}

}  // namespace detail

/// Encodes at quality q (IJG scale) and decodes back. Samples are quantized to
/// 8 bits on the way in; the result is in [0, 1].
inline Image jpeg_compress(const Image& img, int quality) {
  if (quality < 1 || quality > 100) throw DegradationError("JPEG quality must be in [1,100]");
  const int c = img.channels(), h = img.height(), w = img.width();
  std::vector<JSAMPLE> pixels(static_cast<std::size_t>(c) * h * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        pixels[(static_cast<std::size_t>(y) * w + x) * c + ch] = quantize8(std::clamp(img.at(ch, y, x), 0.0, 1.0));

  unsigned char* encoded = nullptr;
  unsigned long encoded_size = 0;
  {
    jpeg_compress_struct cinfo{};
    detail::JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = detail::jpeg_throw;
    jpeg_create_compress(&cinfo);
    try {
      jpeg_mem_dest(&cinfo, &encoded, &encoded_size);
      cinfo.image_width = static_cast<JDIMENSION>(w);
      cinfo.image_height = static_cast<JDIMENSION>(h);
      cinfo.input_components = c;
      cinfo.in_color_space = c == 1 ? JCS_GRAYSCALE : JCS_RGB;
      jpeg_set_defaults(&cinfo);
      jpeg_set_quality(&cinfo, quality, TRUE);
      jpeg_start_compress(&cinfo, TRUE);
      while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = pixels.data() + static_cast<std::size_t>(cinfo.next_scanline) * w * c;
        jpeg_write_scanlines(&cinfo, &row, 1);
      }
      jpeg_finish_compress(&cinfo);
    } catch (...) {
      jpeg_destroy_compress(&cinfo);
      std::free(encoded);
      throw;
    }
    jpeg_destroy_compress(&cinfo);
  }

  Image out(c, h, w);
  jpeg_decompress_struct dinfo{};
  detail::JpegErrorManager err{};
  dinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = detail::jpeg_throw;
  jpeg_create_decompress(&dinfo);
  try {
    jpeg_mem_src(&dinfo, encoded, encoded_size);
    jpeg_read_header(&dinfo, TRUE);
    dinfo.out_color_space = c == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&dinfo);
    std::vector<JSAMPLE> row(static_cast<std::size_t>(w) * c);
    while (dinfo.output_scanline < dinfo.output_height) {
      const int y = static_cast<int>(dinfo.output_scanline);
      JSAMPROW rp = row.data();
      jpeg_read_scanlines(&dinfo, &rp, 1);
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < c; ++ch) out.at(ch, y, x) = row[static_cast<std::size_t>(x) * c + ch] / 255.0;
    }
    jpeg_finish_decompress(&dinfo);
  } catch (...) {
    jpeg_destroy_decompress(&dinfo);
    std::free(encoded);
    throw;
  }
  jpeg_destroy_decompress(&dinfo);
  std::free(encoded);
  return out;
}

inline Image degrade(const Image& hr, const DegradationSpec& spec) {
  spec.validate();
  Image lr = bicubic_downsample(hr, spec.scale);
  if (spec.scale > 1) lr = clip(std::move(lr));
  Rng rng(spec.seed);
  lr = add_sensor_noise(lr, spec.noise_sigma, rng);
  if (spec.jpeg_quality) lr = jpeg_compress(lr, *spec.jpeg_quality);
  return lr;
}

// ---------------------------------------------------------------------------
// Directory batch mode

struct ManifestRow {
  std::filesystem::path hr_path;
  std::filesystem::path lr_path;
  DegradationSpec spec;
};

inline constexpr const char* kManifestHeader = "hr_path,lr_path,scale,sigma,jpeg_q,seed";

inline std::string format_jpeg_quality(const std::optional<int>& q) { return q ? std::to_string(*q) : "off"; }

inline std::vector<std::filesystem::path> list_png_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error(dir.string() + ": not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

/// Degrades every PNG in hr_dir into out_dir as {stem}_lr.png. Each file gets
/// seed spec.seed + index (filename order) so runs are reproducible.
inline std::vector<ManifestRow> degrade_directory(const std::filesystem::path& hr_dir,
                                                  const std::filesystem::path& out_dir,
                                                  const DegradationSpec& spec) {
  spec.validate();
  std::filesystem::create_directories(out_dir);
  std::vector<ManifestRow> rows;
  std::uint64_t index = 0;
  for (const auto& hr_path : list_png_files(hr_dir)) {
    DegradationSpec item = spec;
    item.seed = spec.seed + index++;
    const Image lr = degrade(load_image(hr_path), item);
    const auto lr_path = out_dir / (hr_path.stem().string() + "_lr.png");
    save_image(lr, lr_path);
    rows.push_back({hr_path, lr_path, item});
  }
  return rows;
}

inline void write_manifest(const std::vector<ManifestRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot write manifest");
  out << kManifestHeader << '\n';
  for (const auto& r : rows)
    out << r.hr_path.string() << ',' << r.lr_path.string() << ',' << r.spec.scale << ',' << r.spec.noise_sigma << ','
        << format_jpeg_quality(r.spec.jpeg_quality) << ',' << r.spec.seed << '\n';
}

inline std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot read manifest");
  std::string line;
  std::getline(in, line);
  if (line != kManifestHeader) throw std::runtime_error(path.string() + ": unexpected manifest header");
  std::vector<ManifestRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1)
      f.push_back(line.substr(start, pos - start));
    f.push_back(line.substr(start));
    if (f.size() != 6) throw std::runtime_error(path.string() + ": malformed manifest row: " + line);
    ManifestRow r;
    r.hr_path = f[0];
    r.lr_path = f[1];
    r.spec.scale = std::stoi(f[2]);
    r.spec.noise_sigma = std::stod(f[3]);
    if (f[4] != "off") r.spec.jpeg_quality = std::stoi(f[4]);
    r.spec.seed = std::stoull(f[5]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace srcyc
