// Image quality measures on RGB (no luma conversion) and directory
// evaluation.
#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "srcyc/degradation.hpp"
#include "srcyc/image.hpp"
#include "srcyc/image_io.hpp"
#include "srcyc/ssim.hpp"

namespace srcyc {

namespace detail {
inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) throw ImageError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

inline Var<double> as_var(const Image& img) { return Var<double>::constant(to_batch<double>(img)); }
}  // namespace detail

/// 10 log10(1 / MSE) with unit peak; +inf for identical images.
inline double psnr(const Image& a, const Image& b) {
  detail::require_same_shape(a, b, "psnr");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

inline double ssim(const Image& a, const Image& b) {
  detail::require_same_shape(a, b, "ssim");
  NoGradGuard guard;
  return ssim(detail::as_var(a), detail::as_var(b)).item();
}

/// Five scales need min(H, W) >= 161; smaller inputs use fewer scales (see
/// ms_ssim_scales).
inline double ms_ssim(const Image& a, const Image& b) {
  detail::require_same_shape(a, b, "ms_ssim");
  NoGradGuard guard;
  return ms_ssim(detail::as_var(a), detail::as_var(b)).item();
}

/// Optional learned perceptual metric (e.g. LPIPS) supplied by the caller.
class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  virtual std::string name() const = 0;
  virtual double operator()(const Image& a, const Image& b) const = 0;
};

struct MetricRow {
  std::string name;
  double psnr = 0;
  double ssim = 0;
  std::optional<double> perceptual;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::vector<std::string> failures;  // unmatched files or per-pair errors
  std::string perceptual_name;        // empty when no plugin was given

  /// Mean PSNR over finite rows; +inf only when every row is +inf.
  double mean_psnr() const {
    double acc = 0;
    int n = 0;
    for (const auto& r : rows)
      if (std::isfinite(r.psnr)) {
        acc += r.psnr;
        ++n;
      }
    if (n == 0) return rows.empty() ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
    return acc / n;
  }

  int infinite_psnr_count() const {
    int n = 0;
    for (const auto& r : rows) n += std::isinf(r.psnr) ? 1 : 0;
    return n;
  }

  double mean_ssim() const {
    double acc = 0;
    for (const auto& r : rows) acc += r.ssim;
    return rows.empty() ? std::numeric_limits<double>::quiet_NaN() : acc / static_cast<double>(rows.size());
  }

  std::optional<double> mean_perceptual() const {
    if (perceptual_name.empty() || rows.empty()) return std::nullopt;
    double acc = 0;
    for (const auto& r : rows) acc += r.perceptual.value_or(0.0);
    return acc / static_cast<double>(rows.size());
  }

  bool ok() const { return failures.empty(); }

  void write_csv(std::ostream& os) const {
    os << std::setprecision(10);
    os << "name,psnr,ssim" << (perceptual_name.empty() ? "" : "," + perceptual_name) << '\n';
    for (const auto& r : rows) {
      os << r.name << ',' << r.psnr << ',' << r.ssim;
      if (!perceptual_name.empty()) os << ',' << r.perceptual.value_or(0.0);
      os << '\n';
    }
    os << "mean," << mean_psnr() << ',' << mean_ssim();
    if (auto p = mean_perceptual()) os << ',' << *p;
    os << '\n';
  }

  void print_table(std::ostream& os) const {
    os << std::left << std::setw(32) << "image" << std::right << std::setw(12) << "PSNR(dB)" << std::setw(10) << "SSIM";
    if (!perceptual_name.empty()) os << std::setw(12) << perceptual_name;
    os << '\n';
    auto line = [&](const std::string& name, double p, double s, std::optional<double> l) {
      os << std::left << std::setw(32) << name << std::right << std::fixed << std::setprecision(4) << std::setw(12) << p
         << std::setw(10) << s;
      if (l) os << std::setw(12) << *l;
      os << '\n' << std::defaultfloat;
    };
    for (const auto& r : rows) line(r.name, r.psnr, r.ssim, r.perceptual);
    line("mean", mean_psnr(), mean_ssim(), mean_perceptual());
    if (int inf = infinite_psnr_count())
      os << "note: " << inf << " identical pair(s) with infinite PSNR excluded from the PSNR mean\n";
    for (const auto& f : failures) os << "error: " << f << '\n';
  }
};

/// Scores every PNG in sr_dir against the same-named file in hr_dir. Rows are
/// in filename order; missing counterparts and per-pair errors are collected
/// in report.failures rather than thrown.
inline MetricReport evaluate_dir(const std::filesystem::path& sr_dir, const std::filesystem::path& hr_dir,
                                 const PerceptualMetric* perceptual = nullptr) {
  MetricReport report;
  if (perceptual) report.perceptual_name = perceptual->name();
  const auto sr_files = list_png_files(sr_dir);
  const auto hr_files = list_png_files(hr_dir);
  for (const auto& sr_path : sr_files) {
    const auto name = sr_path.filename();
    const auto hr_path = hr_dir / name;
    if (!std::filesystem::exists(hr_path)) {
      report.failures.push_back(name.string() + ": no counterpart in " + hr_dir.string());
      continue;
    }
    try {
      const Image sr = load_image(sr_path);
      const Image hr = load_image(hr_path);
      MetricRow row{name.string(), psnr(sr, hr), ssim(sr, hr), std::nullopt};
      if (perceptual) row.perceptual = (*perceptual)(sr, hr);
      report.rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      report.failures.push_back(name.string() + ": " + e.what());
    }
  }
  for (const auto& hr_path : hr_files)
    if (!std::filesystem::exists(sr_dir / hr_path.filename()))
      report.failures.push_back(hr_path.filename().string() + ": no counterpart in " + sr_dir.string());
  return report;
}

}  // namespace srcyc
