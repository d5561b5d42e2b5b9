#pragma once

#include <limits>
#include <string>
#include <vector>

#include "abpn/imaging.hpp"
#include "abpn/model.hpp"

namespace abpn {

/// Single-channel plane, row-major, on the 0–255 scale.
struct LumaPlane {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// BT.601 studio-swing luma: 16 + 65.481 R + 128.553 G + 24.966 B.
LumaPlane rgb_to_y(const ImageBuffer& img);

/// Returned by psnr() for identical planes.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// PSNR in dB after removing `border` pixels on every side.
double psnr(const LumaPlane& a, const LumaPlane& b, int border);

/// Mean single-scale SSIM over all valid 11×11 Gaussian windows (σ = 1.5).
double ssim(const LumaPlane& a, const LumaPlane& b, int border);

/// Removes `border` pixels from every side.
LumaPlane crop_border(const LumaPlane& plane, int border);

/// Average of dihedral_inverse(sr(dihedral(lr, k)), k) over `transforms`.
ImageBuffer self_ensemble_sr(const SrFunction& sr, const ImageBuffer& lr,
                             const std::vector<int>& transforms = {0, 1, 2, 3, 4, 5, 6, 7});

struct ImageScore {
  std::string method;
  std::string filename;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct ReportRow {
  std::string dataset;
  int scale = 0;
  std::string method;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricsReport {
  std::vector<ReportRow> rows;
  std::vector<ImageScore> per_image;
  /// Free-form `key: value` lines printed above the table.
  std::vector<std::string> header;
  int skipped_files = 0;
  int infinite_psnr = 0;

  void merge(const MetricsReport& other);
};

/// Generates LR inputs from `<dataset_dir>/HR/*.png` (or the directory itself
/// when it has no HR subdirectory) and scores `sr` on the Y channel with a
/// border of `scale` pixels.
MetricsReport evaluate(const SrFunction& sr, const std::string& method, const std::string& dataset_dir, int scale,
                       bool ensemble);

/// Scores a precomputed set of (sr, hr) pairs; used by evaluate() and the
/// ablation harness.
MetricsReport score_pairs(const std::string& dataset, const std::string& method, int scale,
                          const std::vector<std::string>& names, const std::vector<ImageBuffer>& sr,
                          const std::vector<ImageBuffer>& hr);

std::string report_csv(const MetricsReport& report);
std::string report_per_image_csv(const MetricsReport& report);
std::string report_table(const MetricsReport& report);

}  // namespace abpn
